#pragma once

#include "ddfusion/errors.hpp"
#include "ddfusion/state_model.hpp"
#include "ddfusion/measurement_models.hpp"
#include "ddfusion/frame_alignment.hpp"
#include "ddfusion/fusion_filter.hpp"
#include "ddfusion/sim_harness.hpp"
#include "ddfusion/io.hpp"
