#pragma once

#include <array>
#include <string_view>

// Fixed channel plan of the nest-connection auto-encoder.
namespace nestfuse::topology {

inline constexpr int kInputChannels = 1;
inline constexpr int kStemChannels = 16;
inline constexpr int kBlockWidth = 16;  // internal width of every ECB/DCB
inline constexpr std::array<int, 4> kScaleChannels = {64, 112, 160, 208};

/// Spatial dimensions of the network input must be multiples of this.
inline constexpr int kSizeMultiple = 16;

enum class LayerId : int {
  kStem,
  kEcb10a, kEcb10b,
  kEcb20a, kEcb20b,
  kEcb30a, kEcb30b,
  kEcb40a, kEcb40b,
  kDcb31a, kDcb31b,
  kDcb21a, kDcb21b,
  kDcb22a, kDcb22b,
  kDcb11a, kDcb11b,
  kDcb12a, kDcb12b,
  kDcb13a, kDcb13b,
  kOutput,
  kHead1, kHead2, kHead3,
};

inline constexpr int kNumCoreLayers = static_cast<int>(LayerId::kOutput) + 1;
inline constexpr int kNumLayersWithHeads = static_cast<int>(LayerId::kHead3) + 1;

struct LayerSpec {
  LayerId id;
  std::string_view name;
  int in_channels;
  int out_channels;
  int kernel;
};

// Decoder block inputs are concatenations: DCB31 = [phi3, up(phi4)] = 160 + 208, etc.
inline constexpr std::array<LayerSpec, kNumLayersWithHeads> kLayers = {{
    {LayerId::kStem, "encoder.conv", 1, 16, 3},
    {LayerId::kEcb10a, "encoder.ecb10.conv1", 16, 16, 3},
    {LayerId::kEcb10b, "encoder.ecb10.conv2", 16, 64, 3},
    {LayerId::kEcb20a, "encoder.ecb20.conv1", 64, 16, 3},
    {LayerId::kEcb20b, "encoder.ecb20.conv2", 16, 112, 3},
    {LayerId::kEcb30a, "encoder.ecb30.conv1", 112, 16, 3},
    {LayerId::kEcb30b, "encoder.ecb30.conv2", 16, 160, 3},
    {LayerId::kEcb40a, "encoder.ecb40.conv1", 160, 16, 3},
    {LayerId::kEcb40b, "encoder.ecb40.conv2", 16, 208, 3},
    {LayerId::kDcb31a, "decoder.dcb31.conv1", 368, 16, 3},
    {LayerId::kDcb31b, "decoder.dcb31.conv2", 16, 160, 3},
    {LayerId::kDcb21a, "decoder.dcb21.conv1", 272, 16, 3},
    {LayerId::kDcb21b, "decoder.dcb21.conv2", 16, 112, 3},
    {LayerId::kDcb22a, "decoder.dcb22.conv1", 384, 16, 3},
    {LayerId::kDcb22b, "decoder.dcb22.conv2", 16, 112, 3},
    {LayerId::kDcb11a, "decoder.dcb11.conv1", 176, 16, 3},
    {LayerId::kDcb11b, "decoder.dcb11.conv2", 16, 64, 3},
    {LayerId::kDcb12a, "decoder.dcb12.conv1", 240, 16, 3},
    {LayerId::kDcb12b, "decoder.dcb12.conv2", 16, 64, 3},
    {LayerId::kDcb13a, "decoder.dcb13.conv1", 304, 16, 3},
    {LayerId::kDcb13b, "decoder.dcb13.conv2", 16, 64, 3},
    {LayerId::kOutput, "decoder.conv", 64, 1, 1},
    {LayerId::kHead1, "decoder.ds1", 64, 1, 1},
    {LayerId::kHead2, "decoder.ds2", 64, 1, 1},
    {LayerId::kHead3, "decoder.ds3", 64, 1, 1},
}};

constexpr const LayerSpec& spec(LayerId id) { return kLayers[static_cast<std::size_t>(id)]; }

constexpr int layer_count(bool deep_supervision) {
  return deep_supervision ? kNumLayersWithHeads : kNumCoreLayers;
}

}  // namespace nestfuse::topology
