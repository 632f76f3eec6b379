#pragma once

#include "plt/field.hpp"
#include "plt/poly.hpp"
#include "plt/linalg.hpp"
#include "plt/rational.hpp"
#include "plt/rng.hpp"
#include "plt/capacity.hpp"
#include "plt/grs.hpp"
#include "plt/pc_plan.hpp"
#include "plt/database.hpp"
#include "plt/wire.hpp"
#include "plt/engine.hpp"
#include "plt/net.hpp"
#include "plt/audit.hpp"
#include "plt/worked_example.hpp"
