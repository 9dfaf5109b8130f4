#pragma once

#include "dmimo/common.hpp"
#include "dmimo/scenario.hpp"
#include "dmimo/channel.hpp"
#include "dmimo/ofdm.hpp"
#include "dmimo/panel.hpp"
#include "dmimo/fronthaul.hpp"
#include "dmimo/central.hpp"
#include "dmimo/pipeline.hpp"
#include "dmimo/sweep.hpp"
#include "dmimo/report.hpp"
