// Copyright (c) 2026 The vclone Authors. All Rights Reserved.
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

// Everything in one include.

#ifndef VCLONE_VCLONE_HPP_
#define VCLONE_VCLONE_HPP_

#include "vclone/config.hpp"
#include "vclone/corpus.hpp"
#include "vclone/dsp.hpp"
#include "vclone/nn.hpp"
#include "vclone/pipeline.hpp"
#include "vclone/seq2seq.hpp"
#include "vclone/serialize.hpp"
#include "vclone/tape.hpp"
#include "vclone/tensor.hpp"
#include "vclone/trainer.hpp"
#include "vclone/units.hpp"
#include "vclone/vqvae.hpp"

#endif  // VCLONE_VCLONE_HPP_
