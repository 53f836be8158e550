#pragma once

#include "gesp/core.hpp"
#include "gesp/criteria.hpp"
#include "gesp/envs.hpp"
#include "gesp/format.hpp"
#include "gesp/gesp.hpp"
#include "gesp/harness.hpp"
#include "gesp/optimizer.hpp"
#include "gesp/replay.hpp"
#include "gesp/stats.hpp"
#include "gesp/version.hpp"
