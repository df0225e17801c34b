#include "mdcgan/architecture.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <unordered_set>

namespace mdcgan {

const std::vector<ReferenceRow>& reference_discriminator_table() {
    static const std::vector<ReferenceRow> rows{
        {"Conv2d-1", {8, 8, 128, 128}, 224},       {"BatchNorm2d-2", {8, 8, 128, 128}, 16},
        {"Dropout2d-3", {8, 8, 128, 128}, 0},      {"LeakyReLU-4", {8, 8, 128, 128}, 0},
        {"Conv2d-5", {8, 16, 64, 64}, 1168},       {"Dropout2d-6", {8, 16, 64, 64}, 0},
        {"BatchNorm2d-7", {8, 16, 64, 64}, 32},    {"LeakyReLU-8", {8, 16, 64, 64}, 0},
        {"Conv2d-9", {8, 32, 32, 32}, 4640},       {"Dropout2d-10", {8, 32, 32, 32}, 0},
        {"BatchNorm2d-11", {8, 32, 32, 32}, 64},   {"LeakyReLU-12", {8, 32, 32, 32}, 0},
        {"Conv2d-13", {8, 64, 16, 16}, 18496},     {"Dropout2d-14", {8, 64, 16, 16}, 0},
        {"BatchNorm2d-15", {8, 64, 16, 16}, 128},  {"LeakyReLU-16", {8, 64, 16, 16}, 0},
        {"Conv2d-17", {8, 128, 8, 8}, 73856},      {"Dropout2d-18", {8, 128, 8, 8}, 0},
        {"BatchNorm2d-19", {8, 128, 8, 8}, 256},   {"LeakyReLU-20", {8, 128, 8, 8}, 0},
        {"Conv2d-21", {8, 256, 4, 4}, 295168},     {"Dropout2d-22", {8, 256, 4, 4}, 0},
        {"BatchNorm2d-23", {8, 256, 4, 4}, 512},   {"LeakyReLU-24", {8, 256, 4, 4}, 0},
    };
    return rows;
}

const std::vector<ReferenceRow>& reference_generator_table() {
    static const std::vector<ReferenceRow> rows{
        {"Linear-1", {8, 16384}, 1654784},
        {"ConvTranspose2d-2", {8, 512, 8, 8}, 8389120},
        {"BatchNorm2d-3", {8, 512, 8, 8}, 1024},
        {"ReLU-4", {8, 512, 8, 8}, 0},
        {"ConvTranspose2d-5", {8, 256, 16, 16}, 2097408},
        {"BatchNorm2d-6", {8, 256, 16, 16}, 512},
        {"ReLU-7", {8, 256, 16, 16}, 0},
        {"ConvTranspose2d-8", {8, 128, 32, 32}, 524416},
        {"BatchNorm2d-9", {8, 128, 32, 32}, 256},
        {"ReLU-10", {8, 128, 32, 32}, 0},
        {"ConvTranspose2d-11", {8, 64, 64, 64}, 131136},
        {"BatchNorm2d-12", {8, 64, 64, 64}, 128},
        {"ReLU-13", {8, 64, 64, 64}, 0},
        {"ConvTranspose2d-14", {8, 32, 128, 128}, 32800},
        {"BatchNorm2d-15", {8, 32, 128, 128}, 64},
        {"ReLU-16", {8, 32, 128, 128}, 0},
        {"ConvTranspose2d-17", {8, 3, 256, 256}, 1539},
    };
    return rows;
}

const std::vector<ReferenceRow>& reference_table(Network network) {
    return network == Network::generator ? reference_generator_table() : reference_discriminator_table();
}

const char* row_status_name(RowStatus status) {
    switch (status) {
        case RowStatus::match: return "ok";
        case RowStatus::mismatch: return "MISMATCH";
        case RowStatus::prose_only: return "prose-only";
        case RowStatus::missing: return "MISSING";
    }
    return "?";
}

std::size_t ArchReport::tabulated_rows() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ArchRow& r) {
        return r.status == RowStatus::match || r.status == RowStatus::mismatch;
    }));
}

std::size_t ArchReport::total_parameters() const {
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.status != RowStatus::missing) n += r.parameters;
    return n;
}

std::size_t ArchReport::tabulated_parameters() const {
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.status == RowStatus::match || r.status == RowStatus::mismatch) n += r.parameters;
    return n;
}

std::size_t ArchReport::expected_parameters() const {
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.status != RowStatus::prose_only) n += r.expected_parameters;
    return n;
}

bool ArchReport::all_match() const {
    return std::none_of(rows.begin(), rows.end(), [](const ArchRow& r) {
        return r.status == RowStatus::mismatch || r.status == RowStatus::missing;
    });
}

namespace {

std::string with_commas(std::size_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

}  // namespace

std::string ArchReport::render() const {
    std::ostringstream out;
    const int w_name = 22, w_shape = 22, w_params = 13;
    const std::string rule(w_name + w_shape + 2 * w_params + 12, '-');
    out << (network == Network::generator ? "Generator Layers" : "Discriminator Layers") << '\n' << rule << '\n';
    out << std::left << std::setw(w_name) << "Layer" << std::setw(w_shape) << "Output Size" << std::right
        << std::setw(w_params) << "Parameters" << std::setw(w_params) << "Expected" << "  Status" << '\n'
        << rule << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(w_name) << r.name
            << std::setw(w_shape) << (r.status == RowStatus::missing ? "-" : to_string(r.output_shape)) << std::right
            << std::setw(w_params) << (r.status == RowStatus::missing ? "-" : with_commas(r.parameters))
            << std::setw(w_params) << (r.status == RowStatus::prose_only ? "-" : with_commas(r.expected_parameters))
            << "  " << row_status_name(r.status);
        if (!r.note.empty()) out << " (" << r.note << ')';
        out << '\n';
    }
    out << rule << '\n';
    out << "Tabulated rows: " << tabulated_rows() << '\n';
    out << "Tabulated parameters: " << with_commas(tabulated_parameters()) << " (expected "
        << with_commas(expected_parameters()) << ")\n";
    out << "Total parameters: " << with_commas(total_parameters()) << '\n';
    out << "Result: " << (all_match() ? "all rows match" : "MISMATCH") << '\n';
    return out.str();
}

ArchReport verify_architecture(const ModelSpec& spec, const std::vector<ReferenceRow>& reference) {
    ArchReport report;
    report.network = spec.network;
    std::unordered_set<std::string> seen;

    Shape shape{kReferenceBatch};
    shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
    bool shapes_valid = true;

    for (const auto& layer : spec.layers) {
        ArchRow row;
        row.name = layer.label;
        row.parameters = param_count(layer.spec);
        if (shapes_valid) {
            try {
                shape = output_shape(layer.spec, shape);
                row.output_shape = shape;
            } catch (const ShapeError& e) {
                shapes_valid = false;
                row.note = e.what();
            }
        }
        if (!layer.tabulated()) {
            row.status = RowStatus::prose_only;
            report.rows.push_back(std::move(row));
            continue;
        }
        auto it = std::find_if(reference.begin(), reference.end(),
                               [&](const ReferenceRow& ref) { return ref.name == layer.row_name; });
        if (it == reference.end()) {
            row.status = RowStatus::mismatch;
            if (row.note.empty()) row.note = "no such row in the reference table";
            report.rows.push_back(std::move(row));
            continue;
        }
        seen.insert(it->name);
        row.expected_shape = it->output_shape;
        row.expected_parameters = it->parameters;
        const bool shape_ok = shapes_valid && row.output_shape == it->output_shape;
        const bool params_ok = row.parameters == it->parameters;
        row.status = shape_ok && params_ok ? RowStatus::match : RowStatus::mismatch;
        if (!shape_ok && row.note.empty()) row.note = "expected shape " + to_string(it->output_shape);
        if (!params_ok) {
            if (!row.note.empty()) row.note += "; ";
            row.note += "expected " + std::to_string(it->parameters) + " parameters";
        }
        report.rows.push_back(std::move(row));
    }
    for (const auto& ref : reference) {
        if (seen.count(ref.name)) continue;
        ArchRow row;
        row.name = ref.name;
        row.expected_shape = ref.output_shape;
        row.expected_parameters = ref.parameters;
        row.status = RowStatus::missing;
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace mdcgan
