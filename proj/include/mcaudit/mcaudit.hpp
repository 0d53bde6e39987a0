#pragma once

#include "mcaudit/analytics.hpp"
#include "mcaudit/audit.hpp"
#include "mcaudit/cell_ref.hpp"
#include "mcaudit/correlation.hpp"
#include "mcaudit/distribution.hpp"
#include "mcaudit/document.hpp"
#include "mcaudit/formula.hpp"
#include "mcaudit/functions.hpp"
#include "mcaudit/model.hpp"
#include "mcaudit/random.hpp"
#include "mcaudit/report.hpp"
#include "mcaudit/simulation.hpp"
#include "mcaudit/step_session.hpp"
