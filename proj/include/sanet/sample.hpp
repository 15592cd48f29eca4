#pragma once

#include <string>
#include <vector>

#include "sanet/image.hpp"
#include "sanet/superpixel.hpp"

namespace sanet {

constexpr int kAttributeCount = 5;

inline const char* attribute_name(int k) {
    static const char* names[kAttributeCount] = {"pigment_network", "negative_network",
                                                 "milia_like_cyst", "globules", "streaks"};
    return names[k];
}

/// One dataset unit: image, the five attribute masks, and its superpixel map.
struct Sample {
    ImageU8 image;
    std::vector<Mask> masks;  // kAttributeCount channels, possibly overlapping
    SuperpixelMap map;
    std::string id;
};

}  // namespace sanet
