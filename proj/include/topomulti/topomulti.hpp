#pragma once

#include "topomulti/artifacts.hpp"
#include "topomulti/config.hpp"
#include "topomulti/fem.hpp"
#include "topomulti/filtering.hpp"
#include "topomulti/gradcheck.hpp"
#include "topomulti/interpolation.hpp"
#include "topomulti/mma.hpp"
#include "topomulti/problem.hpp"
