#pragma once

#include "tsdiff/batch.hpp"
#include "tsdiff/checkpoint.hpp"
#include "tsdiff/datasets.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/diagnostics.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/io.hpp"
#include "tsdiff/mlp.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/samplers.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/stats.hpp"
#include "tsdiff/theory.hpp"
#include "tsdiff/timeshift.hpp"
#include "tsdiff/training.hpp"
