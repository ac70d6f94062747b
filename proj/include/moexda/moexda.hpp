#pragma once

#include "moexda/autograd.hpp"
#include "moexda/bias_eval.hpp"
#include "moexda/checkpoint.hpp"
#include "moexda/config.hpp"
#include "moexda/data.hpp"
#include "moexda/edge.hpp"
#include "moexda/errors.hpp"
#include "moexda/gradcheck.hpp"
#include "moexda/gradcheck_suites.hpp"
#include "moexda/io.hpp"
#include "moexda/loss.hpp"
#include "moexda/moments.hpp"
#include "moexda/png_io.hpp"
#include "moexda/rng.hpp"
#include "moexda/synthetic.hpp"
#include "moexda/tensor.hpp"
#include "moexda/train.hpp"
#include "moexda/vit.hpp"
