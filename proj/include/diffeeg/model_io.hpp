#pragma once

#include <cstddef>
#include <memory>

#include "diffeeg/checkpoint.hpp"
#include "diffeeg/classifiers.hpp"
#include "diffeeg/diffusion.hpp"
#include "diffeeg/network.hpp"
#include "diffeeg/schedule.hpp"

namespace diffeeg {

struct DiffusionBundle {
  std::unique_ptr<EpsNet> net;
  ScheduleConfig schedule;
  std::size_t stft_window = 32;
  std::size_t stft_hop = 32;
  TrainState state;  // iteration, seed and Adam moments
};

// Parameters under "param/<name>", Adam moments under "adam_m/<name>" and
// "adam_v/<name>"; geometry, schedule and counters as meta entries.
Checkpoint save_diffusion(const DiffusionBundle& bundle);
// Throws FormatError on missing entries or shapes that disagree with the
// stored configuration.
DiffusionBundle load_diffusion(const Checkpoint& ckpt);

Checkpoint save_classifier(const Classifier& clf);
std::unique_ptr<Classifier> load_classifier(const Checkpoint& ckpt);

}  // namespace diffeeg
