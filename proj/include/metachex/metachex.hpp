#pragma once

// Umbrella header for the whole library.

#include "metachex/analysis.hpp"
#include "metachex/checkpoint.hpp"
#include "metachex/common.hpp"
#include "metachex/config.hpp"
#include "metachex/csv.hpp"
#include "metachex/data_ingest.hpp"
#include "metachex/formats.hpp"
#include "metachex/image.hpp"
#include "metachex/image_io.hpp"
#include "metachex/layers.hpp"
#include "metachex/loss.hpp"
#include "metachex/metrics.hpp"
#include "metachex/model.hpp"
#include "metachex/optimizer.hpp"
#include "metachex/preprocess.hpp"
#include "metachex/report.hpp"
#include "metachex/rng.hpp"
#include "metachex/schedule.hpp"
#include "metachex/svg_plot.hpp"
#include "metachex/synthetic.hpp"
#include "metachex/tensor.hpp"
#include "metachex/training.hpp"
#include "metachex/tsne.hpp"
