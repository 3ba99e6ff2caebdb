#pragma once

#include <map>
#include <string>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg {

struct VideoSample {
    std::string id;
    Tensor<float> features;   // D x T
    std::vector<int> labels;  // length T
};

struct DatasetBundle {
    std::vector<std::string> class_names;        // index -> name
    std::map<std::string, int> class_index;      // name -> index
    std::vector<VideoSample> videos;
    std::map<std::string, std::vector<std::string>> splits;  // split name -> video ids
    std::map<std::string, std::string> manifest;             // synthetic sets only

    const VideoSample& video(const std::string& id) const;
    std::vector<const VideoSample*> split_videos(const std::string& split) const;
};

struct SyntheticSpec {
    int num_videos = 30;
    int num_classes = 8;
    int feature_dim = 32;
    int min_segment = 30;
    int max_segment = 120;
    int mean_segments = 13;   // segments per video
    double noise_sigma = 0.6;
    std::uint64_t seed = 1;
};

// Binary feature format: magic "MSTF", u32 version=1, u32 channels,
// u64 time, then channels*time float32 little-endian, channel-major.
void save_features(const std::string& path, const Tensor<float>& t);
Tensor<float> load_features(const std::string& path);

// Directory layout: features/<id>.mstf, groundTruth/<id>.txt, mapping.txt,
// splits/<name>.bundle. Loads every video referenced by the split (or all
// videos when split is empty).
DatasetBundle load_dataset(const std::string& root, const std::string& split = "");

// Writes a bundle in the on-disk layout above (all videos, all splits).
void save_dataset(const std::string& root, const DatasetBundle& bundle);

// Keeps frames 0, factor, 2*factor, ...
VideoSample temporal_downsample(const VideoSample& sample, int factor);

// Seeded synthetic generator: class prototypes + Gaussian noise, uniform
// non-self class transitions, uniform segment lengths, 80/20 train/test split.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

std::vector<std::string> read_label_names(const std::string& path, size_t expected_lines = 0);
std::map<std::string, int> load_mapping(const std::string& path,
                                         std::vector<std::string>* names = nullptr);

}  // namespace tempseg
