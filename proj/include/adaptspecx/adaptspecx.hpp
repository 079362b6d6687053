#pragma once

#include "adaptspecx/component.hpp"
#include "adaptspecx/config.hpp"
#include "adaptspecx/distributions.hpp"
#include "adaptspecx/error.hpp"
#include "adaptspecx/io.hpp"
#include "adaptspecx/lsbp.hpp"
#include "adaptspecx/panel.hpp"
#include "adaptspecx/parallel.hpp"
#include "adaptspecx/rng.hpp"
#include "adaptspecx/sampler.hpp"
#include "adaptspecx/segment_model.hpp"
#include "adaptspecx/simulation.hpp"
#include "adaptspecx/spectral.hpp"
#include "adaptspecx/store.hpp"
#include "adaptspecx/summary.hpp"
