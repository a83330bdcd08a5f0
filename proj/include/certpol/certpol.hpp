#pragma once
// Umbrella header for the certpol library.

#include "certpol/benchmark.hpp"
#include "certpol/bounds.hpp"
#include "certpol/calibrate.hpp"
#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/genmodel.hpp"
#include "certpol/learner.hpp"
#include "certpol/policy.hpp"
#include "certpol/rng.hpp"
#include "certpol/weights.hpp"
