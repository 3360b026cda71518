#pragma once

// Umbrella header for the calibrated cross-domain hypothesis re-ranker.

#include "calrank/calibration.hpp"
#include "calrank/components.hpp"
#include "calrank/corpus.hpp"
#include "calrank/decode.hpp"
#include "calrank/error.hpp"
#include "calrank/features.hpp"
#include "calrank/hypothesis.hpp"
#include "calrank/io.hpp"
#include "calrank/maxent.hpp"
#include "calrank/metrics.hpp"
#include "calrank/pipeline.hpp"
#include "calrank/reranker.hpp"
#include "calrank/rng.hpp"
#include "calrank/types.hpp"
