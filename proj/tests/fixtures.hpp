#pragma once

// Small trained models shared by several suites. Built once per process.

#include "cbnn/data.hpp"
#include "cbnn/network.hpp"
#include "cbnn/training.hpp"

namespace fixture {

struct SynthModel {
  cbnn::ArchitectureSpec arch;
  cbnn::ParameterStore params;
  cbnn::LabeledDataset train;
  cbnn::LabeledDataset test;
};

inline cbnn::ArchitectureSpec synth_arch(int d1 = 16, int dense = 32) {
  cbnn::LadderConfig c;
  c.name = "synth";
  c.width = c.height = 8;
  c.encoding = cbnn::InputEncoding::bitsliced;
  c.conv_depths = {d1, d1};
  c.dense_depths = {dense};
  c.classes = 4;
  c.first_layer = cbnn::Precision::full;
  return build_ladder(c);
}

inline const SynthModel& synth_model() {
  static const SynthModel m = [] {
    SynthModel s;
    cbnn::SynthTaskConfig sc;
    sc.samples = 1500;
    sc.margin = 0.1;
    s.train = cbnn::synth_bit_task(sc);
    sc.samples = 400;
    sc.stream = 1;
    s.test = cbnn::synth_bit_task(sc);
    s.arch = synth_arch();
    cbnn::TrainConfig tc;
    tc.epochs = 6;
    tc.batch_size = 64;
    tc.learning_rate = 3e-3;
    tc.lr_decay = 0.9;
    tc.seed = 2;
    s.params = cbnn::train(s.arch, tc, s.train, s.test).state.params;
    return s;
  }();
  return m;
}

}  // namespace fixture
