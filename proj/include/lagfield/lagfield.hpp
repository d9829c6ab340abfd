#ifndef LAGFIELD_LAGFIELD_HPP
#define LAGFIELD_LAGFIELD_HPP

#include "lagfield/error.hpp"
#include "lagfield/ad.hpp"
#include "lagfield/dual.hpp"
#include "lagfield/linalg.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/density.hpp"
#include "lagfield/theories.hpp"
#include "lagfield/seed.hpp"
#include "lagfield/solver.hpp"
#include "lagfield/training.hpp"
#include "lagfield/tw_locator.hpp"
#include "lagfield/rom.hpp"
#include "lagfield/model.hpp"
#include "lagfield/io.hpp"
#include "lagfield/config.hpp"

#endif  // LAGFIELD_LAGFIELD_HPP
