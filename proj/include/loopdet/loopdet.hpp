// Copyright 2026 The loopdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "loopdet/calibration.hpp"
#include "loopdet/core_model.hpp"
#include "loopdet/entropy_opt.hpp"
#include "loopdet/error.hpp"
#include "loopdet/mc_sim.hpp"
#include "loopdet/photon_stats.hpp"
#include "loopdet/postselect.hpp"
#include "loopdet/random.hpp"
