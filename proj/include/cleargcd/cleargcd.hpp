#pragma once

#include "cleargcd/augment.hpp"
#include "cleargcd/config.hpp"
#include "cleargcd/datagen.hpp"
#include "cleargcd/dataset_io.hpp"
#include "cleargcd/eval.hpp"
#include "cleargcd/experiment.hpp"
#include "cleargcd/gradcheck.hpp"
#include "cleargcd/losses.hpp"
#include "cleargcd/model.hpp"
#include "cleargcd/prototype_bank.hpp"
#include "cleargcd/tensor.hpp"
#include "cleargcd/trainer.hpp"
