#pragma once

#include "adversary.hpp"
#include "core.hpp"
#include "counterexample.hpp"
#include "hindsight.hpp"
#include "model.hpp"
#include "regret.hpp"
#include "transition.hpp"
