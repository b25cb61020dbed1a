#include "alf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "alf/binio.hpp"
#include "alf/conv.hpp"
#include "alf/log.hpp"

namespace alf {

namespace {

constexpr std::int64_t kCifarRecord = 3073;
constexpr std::int64_t kCifarPixels = 1024;  // per channel plane

void append_cifar_file(const std::string& file, std::vector<std::string>& blobs,
                       std::int64_t& records) {
    std::string bytes = read_file(file);
    if (bytes.size() % kCifarRecord != 0) {
        throw FormatError("cifar10: '" + file + "' size " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(kCifarRecord));
    }
    records += static_cast<std::int64_t>(bytes.size()) / kCifarRecord;
    blobs.push_back(std::move(bytes));
}

}  // namespace

Dataset load_cifar10(const std::string& path, Split split) {
    namespace fs = std::filesystem;
    std::vector<std::string> blobs;
    std::int64_t n = 0;
    if (fs::is_directory(path)) {
        if (split == Split::Train) {
            for (int i = 1; i <= 5; ++i) {
                append_cifar_file(path + "/data_batch_" + std::to_string(i) + ".bin", blobs, n);
            }
        } else {
            append_cifar_file(path + "/test_batch.bin", blobs, n);
        }
    } else {
        append_cifar_file(path, blobs, n);
    }

    Dataset ds;
    ds.classes = 10;
    ds.images = Tensor4::zeros({n, 32, 32, 3}, Layout::NHWC);
    ds.labels.resize(static_cast<std::size_t>(n));

    std::int64_t rec = 0;
    for (const std::string& bytes : blobs) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
        const std::int64_t count = static_cast<std::int64_t>(bytes.size()) / kCifarRecord;
        for (std::int64_t r = 0; r < count; ++r, ++rec) {
            const unsigned char* record = p + r * kCifarRecord;
            if (record[0] > 9) {
                throw FormatError("cifar10: label byte " + std::to_string(int(record[0])) +
                                  " out of range in record " + std::to_string(rec));
            }
            ds.labels[static_cast<std::size_t>(rec)] = record[0];
            const unsigned char* pix = record + 1;
            for (std::int64_t ch = 0; ch < 3; ++ch) {
                for (std::int64_t y = 0; y < 32; ++y) {
                    for (std::int64_t x = 0; x < 32; ++x) {
                        ds.images(rec, y, x, ch) =
                            static_cast<float>(pix[ch * kCifarPixels + y * 32 + x]) / 255.0f;
                    }
                }
            }
        }
    }
    log_info("dataset", "cifar10 %s: %lld samples", split == Split::Train ? "train" : "test",
             static_cast<long long>(n));
    return ds;
}

namespace {

// Bank [K,K,Ci,Co] as a (K*K*Ci) x Co matrix product A*B with inner dim
// `rank`, so its output-channel rank is exactly min(rank, ...).
Tensor4 rank_limited_bank(std::int64_t k, std::int64_t ci, std::int64_t co, std::int64_t rank,
                          std::mt19937& rng) {
    const std::int64_t rows = k * k * ci;
    const double sigma2 = 2.0 / static_cast<double>(rows);
    const double alpha = std::pow(sigma2 / static_cast<double>(rank), 0.25);
    std::normal_distribution<double> dist(0.0, alpha);

    std::vector<double> a(static_cast<std::size_t>(rows * rank));
    std::vector<double> b(static_cast<std::size_t>(rank * co));
    for (auto& v : a) v = dist(rng);
    for (auto& v : b) v = dist(rng);

    Tensor4 w({k, k, ci, co}, Layout::KKIO);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t o = 0; o < co; ++o) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < rank; ++t) {
                acc += a[static_cast<std::size_t>(r * rank + t)] *
                       b[static_cast<std::size_t>(t * co + o)];
            }
            w.raw()[r * co + o] = static_cast<float>(acc);
        }
    }
    return w;
}

Tensor4 raw_scores(const Teacher& t, const Tensor4& x) {
    Tensor4 h = activation(conv2d_fast(x, t.w1, {3, 1, 1}), Activation::Relu);
    Tensor4 s = conv2d_fast(h, t.w2, {3, 1, 1});
    const std::int64_t n = s.dim(0), hw = s.dim(1) * s.dim(2), c = s.dim(3);
    Tensor4 pooled = Tensor4::zeros({n, 1, 1, c}, Layout::NHWC);
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t i = 0; i < hw; ++i) {
            for (std::int64_t j = 0; j < c; ++j) {
                pooled.raw()[b * c + j] += s.raw()[(b * hw + i) * c + j];
            }
        }
        for (std::int64_t j = 0; j < c; ++j) {
            pooled.raw()[b * c + j] /= static_cast<float>(hw);
        }
    }
    return pooled;
}

}  // namespace

Teacher make_teacher(unsigned seed, std::int64_t rank, std::int64_t classes, std::int64_t width,
                     double min_margin) {
    if (classes < 2) throw ConfigError("teacher: classes must be >= 2");
    if (rank < 1 || rank > std::min(width, classes)) {
        throw ConfigError("teacher: rank must be in [1, min(width, classes)]");
    }
    if (min_margin < 0.0) throw ConfigError("teacher: min_margin must be >= 0");
    std::mt19937 rng(seed);
    const std::int64_t probe_n = 512;

    for (int attempt = 0; attempt < 64; ++attempt) {
        Teacher t;
        t.classes = classes;
        t.w1 = rank_limited_bank(3, 1, width, rank, rng);
        t.w2 = rank_limited_bank(3, width, classes, rank, rng);
        t.offset.assign(static_cast<std::size_t>(classes), 0.0f);
        t.scale.assign(static_cast<std::size_t>(classes), 1.0f);

        // Standardize class scores on the probe batch: mean 0, unit variance
        // per class, so no class dominates on scale alone.
        Tensor4 probe({probe_n, 8, 8, 1}, Layout::NHWC);
        fill_normal(probe, rng, 0.0f, 1.0f);
        Tensor4 s = raw_scores(t, probe);
        std::vector<double> mean(static_cast<std::size_t>(classes), 0.0);
        std::vector<double> sq(static_cast<std::size_t>(classes), 0.0);
        for (std::int64_t b = 0; b < probe_n; ++b) {
            for (std::int64_t j = 0; j < classes; ++j) {
                const auto v = static_cast<double>(s.raw()[b * classes + j]);
                mean[static_cast<std::size_t>(j)] += v;
                sq[static_cast<std::size_t>(j)] += v * v;
            }
        }
        for (std::int64_t j = 0; j < classes; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            mean[ju] /= static_cast<double>(probe_n);
            const double var = sq[ju] / static_cast<double>(probe_n) - mean[ju] * mean[ju];
            t.offset[ju] = static_cast<float>(mean[ju]);
            t.scale[ju] = static_cast<float>(1.0 / std::sqrt(std::max(var, 1e-12)));
        }

        // A class whose score direction nearly coincides with another's almost
        // never wins the argmax, and the margin filter starves it further.
        // Candidates are redrawn until every class takes a workable share of
        // the labels the filter would actually keep.
        std::vector<std::int64_t> wins(static_cast<std::size_t>(classes), 0);
        std::int64_t kept = 0;
        for (std::int64_t b = 0; b < probe_n; ++b) {
            std::int64_t best = 0;
            double best_v = -std::numeric_limits<double>::infinity();
            double second_v = -std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < classes; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                const double v =
                    (static_cast<double>(s.raw()[b * classes + j]) - t.offset[ju]) * t.scale[ju];
                if (v > best_v) {
                    second_v = best_v;
                    best_v = v;
                    best = j;
                } else if (v > second_v) {
                    second_v = v;
                }
            }
            if (best_v - second_v < min_margin) continue;
            ++wins[static_cast<std::size_t>(best)];
            ++kept;
        }
        const std::int64_t min_share = std::max<std::int64_t>(1, kept / (4 * classes));
        if (kept >= probe_n / 8 &&
            *std::min_element(wins.begin(), wins.end()) >= min_share) {
            log_debug("dataset", "teacher accepted on attempt %d", attempt + 1);
            return t;
        }
    }
    throw NumericError("teacher: no class-balanced candidate in 64 attempts");
}

Tensor4 teacher_scores(const Teacher& t, const Tensor4& x) {
    Tensor4 s = raw_scores(t, x);
    const std::int64_t c = s.dim(3);
    for (std::int64_t i = 0; i < s.size(); i += c) {
        for (std::int64_t j = 0; j < c; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            s.raw()[i + j] = (s.raw()[i + j] - t.offset[ju]) * t.scale[ju];
        }
    }
    return s;
}

Dataset synth_teacher(unsigned seed, std::int64_t n, std::int64_t rank, std::int64_t classes,
                      double min_margin) {
    return synth_teacher(seed, n, rank, classes, min_margin, seed);
}

Dataset synth_teacher(unsigned seed, std::int64_t n, std::int64_t rank, std::int64_t classes,
                      double min_margin, unsigned data_seed) {
    Teacher t = make_teacher(seed, rank, classes, 16, min_margin);
    std::mt19937 rng(data_seed + 0x9e3779b9u);

    Dataset ds;
    ds.classes = classes;
    ds.images = Tensor4::zeros({n, 8, 8, 1}, Layout::NHWC);
    ds.labels.resize(static_cast<std::size_t>(n));

    const std::int64_t chunk = 256;
    std::int64_t kept = 0;
    std::int64_t drawn = 0;
    while (kept < n) {
        Tensor4 batch({chunk, 8, 8, 1}, Layout::NHWC);
        fill_normal(batch, rng, 0.0f, 1.0f);
        Tensor4 s = teacher_scores(t, batch);
        drawn += chunk;
        for (std::int64_t b = 0; b < chunk && kept < n; ++b) {
            const float* row = s.raw() + b * classes;
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < classes; ++j) {
                if (row[j] > row[best]) best = j;
            }
            float second = -std::numeric_limits<float>::infinity();
            for (std::int64_t j = 0; j < classes; ++j) {
                if (j != best) second = std::max(second, row[j]);
            }
            if (static_cast<double>(row[best]) - static_cast<double>(second) < min_margin) {
                continue;
            }
            for (std::int64_t i = 0; i < 64; ++i) {
                ds.images.raw()[kept * 64 + i] = batch.raw()[b * 64 + i];
            }
            ds.labels[static_cast<std::size_t>(kept)] = static_cast<std::int32_t>(best);
            ++kept;
        }
        if (drawn > 1000 * (n + chunk)) {
            throw NumericError("synth_teacher: margin filter rejects almost everything");
        }
    }
    log_debug("dataset", "synth teacher: kept %lld of %lld drawn", static_cast<long long>(kept),
              static_cast<long long>(drawn));
    return ds;
}

}  // namespace alf
