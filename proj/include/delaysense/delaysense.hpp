#pragma once

// Umbrella header for the analysis library. The HTTP front end lives in
// delaysense/study_http.hpp and is included separately.

#include "delaysense/agreement.hpp"
#include "delaysense/clustering.hpp"
#include "delaysense/decision_tree.hpp"
#include "delaysense/domain.hpp"
#include "delaysense/error.hpp"
#include "delaysense/f_distribution.hpp"
#include "delaysense/factor_analysis.hpp"
#include "delaysense/latin_square.hpp"
#include "delaysense/pipeline.hpp"
#include "delaysense/study.hpp"
