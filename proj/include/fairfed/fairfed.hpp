/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FAIRFED_FAIRFED_HPP_
#define FAIRFED_FAIRFED_HPP_

#include "fairfed/checkpoint.hpp"
#include "fairfed/common.hpp"
#include "fairfed/datasets.hpp"
#include "fairfed/dp_mechanism.hpp"
#include "fairfed/experiment.hpp"
#include "fairfed/fair_trainer.hpp"
#include "fairfed/fairness_metrics.hpp"
#include "fairfed/fed_protocol.hpp"
#include "fairfed/matrix.hpp"
#include "fairfed/mlp_model.hpp"
#include "fairfed/tabular_data.hpp"

#endif  // FAIRFED_FAIRFED_HPP_
