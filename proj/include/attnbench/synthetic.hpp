#pragma once

#include <cstdint>

#include "attnbench/dataset.hpp"

namespace attnbench {

// Deterministic synthetic image sets in CIFAR geometry (3x32x32, [0,1]),
// used for self-contained tests and for running the harness on machines
// without the real datasets on disk.
//
// Each class c in [0, num_classes) is an oriented sinusoidal grating at
// angle pi*c/num_classes with a class-keyed RGB balance; phase, contrast,
// brightness and pixel noise vary per image. The task is learnable by a
// small ViT from patch statistics but not trivially linearly separable in
// raw pixel space (phase randomization removes fixed pixel cues).
LabeledDataset make_synthetic_cifar(std::size_t count, int num_classes,
                                    std::uint64_t seed);

// Writes a CIFAR-10-format binary batch file of synthetic images, so the
// stand-in exercises the real CIFAR parser end to end.
void write_synthetic_cifar_file(const std::string& path, std::size_t count,
                                int num_classes, std::uint64_t seed);

}  // namespace attnbench
