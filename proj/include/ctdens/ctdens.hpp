#pragma once

//! Umbrella header for the ctdens library.

#include "ctdens/common.hpp"
#include "ctdens/rng.hpp"

#include "ctdens/numerics/density.hpp"
#include "ctdens/numerics/invert_cdf.hpp"
#include "ctdens/numerics/special.hpp"
#include "ctdens/numerics/spd_matrix.hpp"

#include "ctdens/vb/evb.hpp"
#include "ctdens/vb/factor.hpp"
#include "ctdens/vb/family.hpp"
#include "ctdens/vb/full_scale.hpp"
#include "ctdens/vb/kmeans.hpp"
#include "ctdens/vb/model.hpp"

#include "ctdens/marginals/marginal.hpp"
#include "ctdens/marginals/select.hpp"

#include "ctdens/copula/copula.hpp"
#include "ctdens/copula/parametric.hpp"

#include "ctdens/eval/dgp.hpp"
#include "ctdens/eval/estimator.hpp"
#include "ctdens/eval/lpds.hpp"

#include "ctdens/io/csv.hpp"
#include "ctdens/io/model_json.hpp"
