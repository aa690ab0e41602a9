#pragma once

#include "eegnorm/config.hpp"
#include "eegnorm/cpc.hpp"
#include "eegnorm/dataset.hpp"
#include "eegnorm/dsp.hpp"
#include "eegnorm/error.hpp"
#include "eegnorm/harness.hpp"
#include "eegnorm/learn.hpp"
#include "eegnorm/normalize.hpp"
#include "eegnorm/parallel.hpp"
#include "eegnorm/recording.hpp"
#include "eegnorm/recording_io.hpp"
#include "eegnorm/rng.hpp"
#include "eegnorm/selftest.hpp"
#include "eegnorm/supervised.hpp"
#include "eegnorm/synth.hpp"
