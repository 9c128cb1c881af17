#pragma once

#include "geocpet/augmentation.hpp"
#include "geocpet/config.hpp"
#include "geocpet/dataset.hpp"
#include "geocpet/error.hpp"
#include "geocpet/evaluation.hpp"
#include "geocpet/frechet_mean.hpp"
#include "geocpet/metrics.hpp"
#include "geocpet/models.hpp"
#include "geocpet/report.hpp"
#include "geocpet/rng.hpp"
#include "geocpet/run_config.hpp"
#include "geocpet/signal.hpp"
#include "geocpet/spd.hpp"
#include "geocpet/synth.hpp"
#include "geocpet/text.hpp"
