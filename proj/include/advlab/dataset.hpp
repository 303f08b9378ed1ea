#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct LabeledItem {
    std::string id;
    Tensor input;
    std::size_t label = 0;
};

/// Labeled inputs over `num_classes` classes. Ids are unique, labels < num_classes.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(std::size_t num_classes, std::vector<LabeledItem> items)
        : num_classes_(num_classes), items_(std::move(items)) {
        validate();
    }

    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<LabeledItem>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    const LabeledItem& operator[](std::size_t i) const { return items_[i]; }

    std::size_t input_dim() const { return items_.empty() ? 0 : items_.front().input.size(); }

    /// Non-fatal note attached by operations that may legitimately return nothing.
    const std::optional<std::string>& warning() const noexcept { return warning_; }
    void set_warning(std::string w) { warning_ = std::move(w); }

private:
    void validate() const {
        std::set<std::string> seen;
        for (const auto& item : items_) {
            if (!seen.insert(item.id).second) throw ContractError("duplicate dataset item id '" + item.id + "'");
            if (item.label >= num_classes_) {
                throw RangeError("item '" + item.id + "' has label " + std::to_string(item.label) + " >= " +
                                 std::to_string(num_classes_) + " classes");
            }
            if (item.input.size() != items_.front().input.size()) {
                throw DimensionError("item '" + item.id + "' has input " + shape_string(item.input.shape()) +
                                     ", expected " + std::to_string(items_.front().input.size()) + " features");
            }
        }
    }

    std::size_t num_classes_ = 0;
    std::vector<LabeledItem> items_;
    std::optional<std::string> warning_;
};

} // namespace advlab
