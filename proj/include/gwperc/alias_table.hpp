#pragma once

#include <cstdint>
#include <vector>

namespace gwperc {

/// Walker alias table over {0, ..., n-1}. One 64-bit word per draw: the high
/// half picks a column, the low half decides between the column and its alias.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(const std::vector<double>& weights);

    std::uint32_t sample(std::uint64_t word) const noexcept {
        const auto column = static_cast<std::uint32_t>(((word >> 32) * size_) >> 32);
        const auto low = static_cast<std::uint32_t>(word);
        return low < threshold_[column] ? column : alias_[column];
    }

    std::size_t size() const noexcept { return size_; }

private:
    std::uint64_t size_ = 0;
    std::vector<std::uint64_t> threshold_;
    std::vector<std::uint32_t> alias_;
};

}  // namespace gwperc
