#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mdcgan/model.hpp"

namespace mdcgan {

/// One row of a published layer summary (batch of 8).
struct ReferenceRow {
    std::string name;
    Shape output_shape;
    std::size_t parameters = 0;
};

/// The 24 discriminator rows and 17 generator rows of the mDCGAN
/// summary tables.
const std::vector<ReferenceRow>& reference_discriminator_table();
const std::vector<ReferenceRow>& reference_generator_table();
const std::vector<ReferenceRow>& reference_table(Network network);

inline constexpr std::size_t kReferenceBatch = 8;

enum class RowStatus {
    match,
    mismatch,
    prose_only,  // built layer that the table leaves out
    missing,     // table row with no built counterpart
};

const char* row_status_name(RowStatus status);

struct ArchRow {
    std::string name;
    Shape output_shape;
    std::size_t parameters = 0;
    Shape expected_shape;
    std::size_t expected_parameters = 0;
    RowStatus status = RowStatus::match;
    std::string note;
};

struct ArchReport {
    Network network = Network::generator;
    std::vector<ArchRow> rows;

    std::size_t tabulated_rows() const;
    std::size_t total_parameters() const;      // every built layer
    std::size_t tabulated_parameters() const;  // rows the table lists
    std::size_t expected_parameters() const;
    bool all_match() const;

    /// Aligned plain text in the layout of the summary tables.
    std::string render() const;
};

/// Row-by-row comparison of a model spec against a reference table.
/// Mismatches are reported, never thrown.
ArchReport verify_architecture(const ModelSpec& spec, const std::vector<ReferenceRow>& reference);
inline ArchReport verify_architecture(const ModelSpec& spec) {
    return verify_architecture(spec, reference_table(spec.network));
}

}  // namespace mdcgan
