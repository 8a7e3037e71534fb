#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bfcdn {

// Integer class labels for a batch of images, [N,H,W] row-major.
struct LabelMask {
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<int> labels;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }

    void validate(int num_classes) const {
        if (static_cast<std::int64_t>(labels.size()) !=
            static_cast<std::int64_t>(batch) * height * width)
            throw std::invalid_argument("LabelMask: label count does not match dims");
        for (const int l : labels)
            if (l < 0 || l >= num_classes)
                throw std::invalid_argument("LabelMask: label " + std::to_string(l) +
                                            " out of range [0," + std::to_string(num_classes) + ")");
    }
};

}  // namespace bfcdn
