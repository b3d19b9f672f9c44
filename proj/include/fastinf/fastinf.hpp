#pragma once

#include "fastinf/correct.hpp"
#include "fastinf/data.hpp"
#include "fastinf/datagen.hpp"
#include "fastinf/engine.hpp"
#include "fastinf/errors.hpp"
#include "fastinf/eval.hpp"
#include "fastinf/lissa.hpp"
#include "fastinf/manifest.hpp"
#include "fastinf/model.hpp"
#include "fastinf/nnindex.hpp"
#include "fastinf/params.hpp"
#include "fastinf/rng.hpp"
#include "fastinf/stats.hpp"
