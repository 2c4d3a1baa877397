#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mitia/image.hpp"

namespace mitia::synth {

enum class Modality { kA, kB };

// One ellipsoidal structure. Coordinates are normalized to [-1, 1] in-plane
// and to slice units along z.
struct PhantomStructure {
  int id = 0;
  double center_x = 0.0;
  double center_y = 0.0;
  double center_z = 0.0;
  double radius_x = 0.5;
  double radius_y = 0.5;
  double radius_z = 1e9;
  double angle = 0.0;
  // Zero for a filled ellipse; otherwise the shell thickness as a fraction
  // of the radius.
  double shell = 0.0;
  double intensity_a = 0.0;
  double intensity_b = 0.0;
};

// A small synthetic "anatomy": a head ellipse plus inner structures. Later
// structures paint over earlier ones.
struct PhantomModel {
  int size = 64;
  int num_slices = 1;
  std::vector<PhantomStructure> structures;

  // int32 [H, W]: id of the topmost structure at each pixel center, -1 for
  // background.
  torch::Tensor labels(int slice) const;
  // Ids of structures with a non-empty cross-section on the slice.
  std::vector<int> present(int slice) const;
  ImageSlice render(int slice, Modality modality) const;
};

// Monotone nonlinear intensity transfer from modality A to modality B,
// before per-structure contrast flips.
double intensity_transfer(double a);

// num_slices == 1 yields a single-slice model where every structure spans
// the slice.
PhantomModel make_phantom_model(uint64_t seed, int size, int num_slices);

struct PhantomPair {
  ImageSlice a;
  ImageSlice b;
  GroundTruthMasks masks;
};

// Two pixel-wise aligned modalities of one phantom slice. size >= 16.
PhantomPair make_phantom_pair(uint64_t seed, int size);

// Paired A/B volumes of one synthetic subject; both carry label maps.
struct PhantomSubject {
  Volume x;
  Volume y;
};

PhantomSubject make_phantom_subject(uint64_t seed, int size, int num_slices, const std::string& subject_id);

std::vector<PhantomSubject> make_phantom_corpus(uint64_t seed, int num_subjects, int slices_per_subject,
                                                int size);

}  // namespace mitia::synth
