#ifndef REGTPS_REGTPS_HPP
#define REGTPS_REGTPS_HPP

#include "regtps/diagnostics.hpp"
#include "regtps/error.hpp"
#include "regtps/evaluation.hpp"
#include "regtps/geometry.hpp"
#include "regtps/hmc.hpp"
#include "regtps/io/config.hpp"
#include "regtps/io/csv.hpp"
#include "regtps/io/stations.hpp"
#include "regtps/kernels.hpp"
#include "regtps/kle.hpp"
#include "regtps/pipeline.hpp"
#include "regtps/posterior.hpp"
#include "regtps/predictive.hpp"
#include "regtps/priors.hpp"
#include "regtps/spde.hpp"
#include "regtps/spectral.hpp"
#include "regtps/target.hpp"
#include "regtps/tps_basis.hpp"

#endif
