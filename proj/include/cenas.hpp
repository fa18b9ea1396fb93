// Copyright 2026 The CENAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CENAS_CENAS_HPP_
#define CENAS_CENAS_HPP_

#include "cenas/adapt.hpp"
#include "cenas/data.hpp"
#include "cenas/dataset.hpp"
#include "cenas/error.hpp"
#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/harness.hpp"
#include "cenas/hash.hpp"
#include "cenas/layers.hpp"
#include "cenas/operators.hpp"
#include "cenas/parallel.hpp"
#include "cenas/rng.hpp"
#include "cenas/runtime.hpp"
#include "cenas/search.hpp"
#include "cenas/serialize.hpp"
#include "cenas/tensor.hpp"

#endif  // CENAS_CENAS_HPP_
