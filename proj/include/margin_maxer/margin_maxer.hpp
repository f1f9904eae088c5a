#pragma once

#include "margin_maxer/analysis.hpp"
#include "margin_maxer/dataset.hpp"
#include "margin_maxer/errors.hpp"
#include "margin_maxer/experiment.hpp"
#include "margin_maxer/linalg.hpp"
#include "margin_maxer/margin.hpp"
#include "margin_maxer/optimizers.hpp"
#include "margin_maxer/reference.hpp"
#include "margin_maxer/rng.hpp"
#include "margin_maxer/schedule.hpp"
#include "margin_maxer/trajectory.hpp"
