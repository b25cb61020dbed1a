#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alf/tensor.hpp"

namespace alf {

struct Dataset {
    Tensor4 images;  // [N,H,W,C], values in sample space
    std::vector<std::int32_t> labels;
    std::int64_t classes = 0;

    std::int64_t size() const { return images.size() == 0 ? 0 : images.dim(0); }
};

enum class Split { Train, Test };

// Binary CIFAR-10: records of 1 label byte + 3072 channel-planar pixel bytes.
// `path` may be one .bin file or the dataset directory holding
// data_batch_1..5.bin and test_batch.bin. Pixels land in [0,1].
Dataset load_cifar10(const std::string& path, Split split);

// Frozen random two-layer conv net whose filter banks have output-channel
// rank exactly `rank`. Class scores are standardized per class against a
// probe batch so argmax labels spread over all classes.
struct Teacher {
    Tensor4 w1;  // [3,3,1,width]
    Tensor4 w2;  // [3,3,width,classes]
    std::vector<float> offset;  // per-class score mean on the probe batch
    std::vector<float> scale;   // per-class inverse standard deviation
    std::int64_t classes = 0;
};

// `min_margin` mirrors the sampling filter so the class-balance check sees
// the same label distribution the dataset will draw from.
Teacher make_teacher(unsigned seed, std::int64_t rank, std::int64_t classes,
                     std::int64_t width = 16, double min_margin = 0.0);

// Centered global-average-pooled scores, [N,1,1,classes].
Tensor4 teacher_scores(const Teacher& t, const Tensor4& x);

// 8x8x1 gaussian inputs labeled by the teacher's argmax. Samples whose top-two
// score margin falls below `min_margin` are rejected and redrawn, so the task
// stays learnable by a small student. Deterministic in seed. `data_seed`
// drives the sample stream alone, so disjoint splits can share one teacher.
Dataset synth_teacher(unsigned seed, std::int64_t n, std::int64_t rank, std::int64_t classes,
                      double min_margin, unsigned data_seed);
Dataset synth_teacher(unsigned seed, std::int64_t n, std::int64_t rank,
                      std::int64_t classes = 4, double min_margin = 0.0);

}  // namespace alf
