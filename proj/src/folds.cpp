#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "msseg/data.hpp"

namespace msseg {

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 5) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields, got " +
                                     std::to_string(fields.size()));
        }
        ManifestEntry e;
        e.id = fields[0];
        e.patient = fields[1];
        try {
            std::size_t used = 0;
            e.timepoint = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad timepoint '" + fields[2] + "'");
        }
        e.image = fields[3];
        e.mask = fields[4];
        if (e.image.is_relative()) e.image = base / e.image;
        if (e.mask.is_relative()) e.mask = base / e.mask;
        out.push_back(std::move(e));
    }
    return out;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::ostringstream os;
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) {
        const auto r = p.lexically_relative(base);
        return (r.empty() || r.native().starts_with("..")) ? p.generic_string() : r.generic_string();
    };
    for (const auto& e : entries) {
        os << e.id << '\t' << e.patient << '\t' << e.timepoint << '\t' << rel(e.image) << '\t' << rel(e.mask) << '\n';
    }
    const std::string text = os.str();
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<FoldSpec> make_folds(const std::vector<ManifestEntry>& manifest,
                                 const std::function<std::size_t(const ManifestEntry&)>& slice_count) {
    // Patients in order of first appearance, each with scans sorted by time point.
    std::vector<std::string> patients;
    std::vector<std::vector<const ManifestEntry*>> scans;
    std::set<std::string> ids;
    for (const auto& e : manifest) {
        if (e.id.empty() || e.patient.empty()) throw std::invalid_argument("manifest entry with empty id or patient");
        if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate manifest id '" + e.id + "'");
        auto it = std::find(patients.begin(), patients.end(), e.patient);
        if (it == patients.end()) {
            patients.push_back(e.patient);
            scans.emplace_back();
            it = patients.end() - 1;
        }
        scans[static_cast<std::size_t>(it - patients.begin())].push_back(&e);
    }
    for (std::size_t p = 0; p < patients.size(); ++p) {
        auto& list = scans[p];
        std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->timepoint < b->timepoint; });
        if (list.size() < 2) {
            throw std::invalid_argument("patient '" + patients[p] + "' has fewer than 2 time points");
        }
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i]->timepoint == list[i - 1]->timepoint) {
                throw std::invalid_argument("patient '" + patients[p] + "' repeats time point " +
                                            std::to_string(list[i]->timepoint));
            }
        }
    }

    std::vector<FoldSpec> folds;
    for (std::size_t k = 0; k < patients.size(); ++k) {
        FoldSpec fold;
        fold.fold_id = static_cast<int>(k + 1);
        std::set<const ManifestEntry*> used;

        const auto& own = scans[k];
        auto test = std::find_if(own.begin(), own.end(), [](auto* e) { return e->timepoint == kTestTimepoint; });
        const ManifestEntry* test_scan = test != own.end() ? *test : own.back();
        fold.test.push_back(test_scan->id);
        used.insert(test_scan);

        // Latest unused scan of each following patient, cycling, while every
        // patient keeps at least one training scan.
        std::vector<std::size_t> remaining(patients.size());
        for (std::size_t p = 0; p < patients.size(); ++p) remaining[p] = scans[p].size() - (p == k ? 1 : 0);
        bool progress = true;
        while (fold.val.size() < kValidationScans && progress) {
            progress = false;
            for (std::size_t step = 1; step <= patients.size() && fold.val.size() < kValidationScans; ++step) {
                const std::size_t p = (k + step) % patients.size();
                if (remaining[p] < 2) continue;
                for (auto it = scans[p].rbegin(); it != scans[p].rend(); ++it) {
                    if (used.count(*it)) continue;
                    fold.val.push_back((*it)->id);
                    used.insert(*it);
                    --remaining[p];
                    progress = true;
                    break;
                }
            }
        }

        for (const auto& e : manifest) {
            if (!used.count(&e)) fold.train.push_back(e.id);
        }
        if (slice_count) {
            for (const auto& e : manifest) {
                const std::size_t n = slice_count(e);
                if (std::find(fold.test.begin(), fold.test.end(), e.id) != fold.test.end()) {
                    fold.n_test += n;
                } else if (std::find(fold.val.begin(), fold.val.end(), e.id) != fold.val.end()) {
                    fold.n_val += n;
                } else {
                    fold.n_train += n;
                }
            }
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

}  // namespace msseg
