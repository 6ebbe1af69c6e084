#pragma once

#include "mfgrec/grid.hpp"
#include "mfgrec/carleman.hpp"
#include "mfgrec/model.hpp"
#include "mfgrec/forward.hpp"
#include "mfgrec/functional.hpp"
#include "mfgrec/optimizer.hpp"
#include "mfgrec/io.hpp"
#include "mfgrec/experiments.hpp"
