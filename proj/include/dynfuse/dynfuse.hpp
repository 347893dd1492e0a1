// Copyright 2026 The dynfuse Authors.
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


// Umbrella header.

#ifndef DYNFUSE_DYNFUSE_HPP
#define DYNFUSE_DYNFUSE_HPP

#include "dynfuse/core.hpp"
#include "dynfuse/engine.hpp"
#include "dynfuse/error.hpp"
#include "dynfuse/eval.hpp"
#include "dynfuse/fusion.hpp"
#include "dynfuse/ingest.hpp"
#include "dynfuse/log.hpp"
#include "dynfuse/parallel.hpp"
#include "dynfuse/run.hpp"
#include "dynfuse/synth.hpp"

#endif  // DYNFUSE_DYNFUSE_HPP
