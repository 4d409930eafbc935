#pragma once

// Convenience include for the whole library.

#include "magdda/constants.hpp"
#include "magdda/driver.hpp"
#include "magdda/emission.hpp"
#include "magdda/errors.hpp"
#include "magdda/genetic.hpp"
#include "magdda/geometry.hpp"
#include "magdda/green.hpp"
#include "magdda/krylov.hpp"
#include "magdda/material.hpp"
#include "magdda/mie.hpp"
#include "magdda/multipole.hpp"
#include "magdda/optimizer.hpp"
#include "magdda/polarizability.hpp"
#include "magdda/quadrature.hpp"
#include "magdda/scene.hpp"
#include "magdda/solver.hpp"
#include "magdda/source.hpp"
#include "magdda/stats.hpp"
#include "magdda/surrogate.hpp"
