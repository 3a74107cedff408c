#pragma once

#include "beefbp/bees.hpp"
#include "beefbp/config.hpp"
#include "beefbp/density.hpp"
#include "beefbp/error.hpp"
#include "beefbp/greens.hpp"
#include "beefbp/grid.hpp"
#include "beefbp/harness.hpp"
#include "beefbp/io.hpp"
#include "beefbp/measure.hpp"
#include "beefbp/obstacle.hpp"
#include "beefbp/parallel.hpp"
#include "beefbp/steady.hpp"
