#pragma once

#include "kronhom/errors.hpp"
#include "kronhom/rng.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/lattice.hpp"
#include "kronhom/operators.hpp"
#include "kronhom/fft.hpp"
#include "kronhom/spectral.hpp"
#include "kronhom/lowrank.hpp"
#include "kronhom/solver.hpp"
#include "kronhom/homogenize.hpp"
#include "kronhom/config.hpp"
#include "kronhom/io.hpp"
