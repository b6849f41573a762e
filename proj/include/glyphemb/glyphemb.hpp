// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Umbrella header.

#pragma once

#include "glyphemb/analysis.hpp"
#include "glyphemb/autodiff.hpp"
#include "glyphemb/checkpoint.hpp"
#include "glyphemb/config.hpp"
#include "glyphemb/corpus.hpp"
#include "glyphemb/embedder.hpp"
#include "glyphemb/experiment.hpp"
#include "glyphemb/glyph.hpp"
#include "glyphemb/lm.hpp"
#include "glyphemb/model_io.hpp"
#include "glyphemb/optim.hpp"
#include "glyphemb/random.hpp"
#include "glyphemb/recurrent.hpp"
#include "glyphemb/segmentor.hpp"
#include "glyphemb/tensor.hpp"
#include "glyphemb/training.hpp"
#include "glyphemb/truetype.hpp"
#include "glyphemb/utf8.hpp"
