#pragma once

#include "ustat/combinatorics.hpp"
#include "ustat/dataset.hpp"
#include "ustat/design.hpp"
#include "ustat/ensemble.hpp"
#include "ustat/error.hpp"
#include "ustat/experiments.hpp"
#include "ustat/generators.hpp"
#include "ustat/hdecomp.hpp"
#include "ustat/inference.hpp"
#include "ustat/kernels.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"
#include "ustat/zeta.hpp"
