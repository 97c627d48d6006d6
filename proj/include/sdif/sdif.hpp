#pragma once

#include "sdif/tensor.hpp"
#include "sdif/ops.hpp"
#include "sdif/grad_check.hpp"
#include "sdif/nn.hpp"
#include "sdif/attention.hpp"
#include "sdif/data.hpp"
#include "sdif/lexicon.hpp"
#include "sdif/synth.hpp"
#include "sdif/model.hpp"
#include "sdif/losses.hpp"
#include "sdif/metrics.hpp"
#include "sdif/optim.hpp"
#include "sdif/checkpoint.hpp"
#include "sdif/train.hpp"
#include "sdif/augment/tokenizer.hpp"
#include "sdif/augment/prompt.hpp"
#include "sdif/augment/chat_client.hpp"
#include "sdif/augment/generate.hpp"
#include "sdif/augment/corpus.hpp"
