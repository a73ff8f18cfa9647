#ifndef MFCZ_MFCZ_HPP
#define MFCZ_MFCZ_HPP

#include "cube_sweep.hpp"
#include "czdecomp.hpp"
#include "experiment.hpp"
#include "family.hpp"
#include "grid.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "operators.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "varexp.hpp"
#include "weights.hpp"

#endif  // MFCZ_MFCZ_HPP
