#pragma once

// Repetition counting from frame-embedding sequences: synthetic data,
// temporal self-similarity, start-probability network, peak counting,
// metrics, and rendering.

#include "rac/core.hpp"
#include "rac/counting.hpp"
#include "rac/data.hpp"
#include "rac/losses.hpp"
#include "rac/metrics.hpp"
#include "rac/network.hpp"
#include "rac/render.hpp"
#include "rac/similarity.hpp"
