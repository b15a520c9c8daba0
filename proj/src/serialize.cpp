#include "fedsan/serialize.hpp"

#include <fstream>
#include <sstream>

#include "fedsan/rng.hpp"

namespace fedsan {

namespace {

json matrix_to_array(const Matrix& m) {
    json arr = json::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
    return arr;
}

Matrix matrix_from_array(const json& arr, Index rows, Index cols) {
    require(static_cast<Index>(arr.size()) == rows * cols,
            "matrix_from_array: element count mismatch");
    Matrix m(rows, cols);
    Index k = 0;
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = arr[k++].get<double>();
    return m;
}

}  // namespace

json adapter_to_json(const LoraAdapter& adapter) {
    return json{{"r", adapter.rank},
                {"alpha", adapter.alpha},
                {"d_in", adapter.d_in()},
                {"d_out", adapter.d_out()},
                {"B", matrix_to_array(adapter.B)},
                {"A", matrix_to_array(adapter.A)}};
}

LoraAdapter adapter_from_json(const json& j) {
    LoraAdapter ad;
    ad.rank = j.at("r").get<int>();
    ad.alpha = j.at("alpha").get<double>();
    Index d_in = j.at("d_in").get<Index>();
    Index d_out = j.at("d_out").get<Index>();
    ad.B = matrix_from_array(j.at("B"), d_in, ad.rank);
    ad.A = matrix_from_array(j.at("A"), ad.rank, d_out);
    return ad;
}

json student_to_json(const StudentClassifier& student) {
    json rows = json::array();
    for (Index i = 0; i < student.weights.rows(); ++i) {
        rows.push_back(json::array({student.weights(i, 0), student.weights(i, 1)}));
    }
    return json{{"vocab_size", student.vocab_size()},
                {"weights", rows},
                {"bias", json::array({student.bias[0], student.bias[1]})}};
}

StudentClassifier student_from_json(const json& j) {
    int vocab_size = j.at("vocab_size").get<int>();
    StudentClassifier s = StudentClassifier::zeros(vocab_size);
    const json& rows = j.at("weights");
    require(static_cast<int>(rows.size()) == vocab_size,
            "student_from_json: weight row count mismatch");
    for (int i = 0; i < vocab_size; ++i) {
        s.weights(i, 0) = rows[i][0].get<double>();
        s.weights(i, 1) = rows[i][1].get<double>();
    }
    s.bias[0] = j.at("bias")[0].get<double>();
    s.bias[1] = j.at("bias")[1].get<double>();
    return s;
}

json metrics_to_json(const Metrics& m) {
    return json{{"asr_likelihood", m.asr_likelihood},
                {"asr_decode", m.asr_decode},
                {"utility_acc", m.utility_acc},
                {"over_refusal_rate", m.over_refusal_rate},
                {"toxic_logprob_shift", m.toxic_logprob_shift},
                {"toxic_n", m.toxic_n},
                {"benign_n", m.benign_n},
                {"boundary_n", m.boundary_n}};
}

Metrics metrics_from_json(const json& j) {
    Metrics m;
    m.asr_likelihood = j.at("asr_likelihood").get<double>();
    m.asr_decode = j.at("asr_decode").get<double>();
    m.utility_acc = j.at("utility_acc").get<double>();
    m.over_refusal_rate = j.at("over_refusal_rate").get<double>();
    m.toxic_logprob_shift = j.at("toxic_logprob_shift").get<double>();
    m.toxic_n = j.at("toxic_n").get<int>();
    m.benign_n = j.at("benign_n").get<int>();
    m.boundary_n = j.at("boundary_n").get<int>();
    return m;
}

json report_to_json(const RunReport& report) {
    json rounds = json::array();
    for (const RoundRecord& r : report.rounds) {
        json rec{{"round", r.round},
                 {"selected", r.selected},
                 {"mean_local_loss", r.mean_local_loss},
                 {"sanitization",
                  json{{"total", r.san_total},
                       {"flagged", r.san_flagged},
                       {"replaced", r.san_replaced},
                       {"discarded", r.san_discarded}}}};
        rec["metrics"] = r.has_metrics ? metrics_to_json(r.metrics) : json(nullptr);
        rounds.push_back(std::move(rec));
    }
    return json{{"config_digest", report.config_digest},
                {"suite_hash", report.suite_hash},
                {"rounds", std::move(rounds)},
                {"final", metrics_to_json(report.final_metrics)}};
}

RunReport report_from_json(const json& j) {
    RunReport report;
    report.config_digest = j.at("config_digest").get<std::string>();
    report.suite_hash = j.at("suite_hash").get<std::string>();
    for (const json& rec : j.at("rounds")) {
        RoundRecord r;
        r.round = rec.at("round").get<int>();
        r.selected = rec.at("selected").get<std::vector<int>>();
        r.mean_local_loss = rec.at("mean_local_loss").get<double>();
        const json& san = rec.at("sanitization");
        r.san_total = san.at("total").get<int>();
        r.san_flagged = san.at("flagged").get<int>();
        r.san_replaced = san.at("replaced").get<int>();
        r.san_discarded = san.at("discarded").get<int>();
        if (!rec.at("metrics").is_null()) {
            r.metrics = metrics_from_json(rec.at("metrics"));
            r.has_metrics = true;
        }
        report.rounds.push_back(std::move(r));
    }
    report.final_metrics = metrics_from_json(j.at("final"));
    return report;
}

std::string samples_to_jsonl(const std::vector<LabeledSample>& samples) {
    std::ostringstream out;
    for (const LabeledSample& s : samples) {
        json line{{"prompt", s.pair.prompt},
                  {"chosen", s.pair.chosen},
                  {"rejected", s.pair.rejected},
                  {"label", s.ground_truth == GroundTruth::Toxic ? "toxic" : "benign"},
                  {"split", s.split == Split::Train ? "train" : "eval"}};
        out << line.dump() << '\n';
    }
    return out.str();
}

std::vector<LabeledSample> samples_from_jsonl(const std::string& text) {
    std::vector<LabeledSample> samples;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        LabeledSample s;
        s.pair.prompt = j.at("prompt").get<TokenSeq>();
        s.pair.chosen = j.at("chosen").get<TokenSeq>();
        s.pair.rejected = j.at("rejected").get<TokenSeq>();
        s.ground_truth = j.at("label").get<std::string>() == "toxic" ? GroundTruth::Toxic
                                                                     : GroundTruth::Benign;
        s.split = j.at("split").get<std::string>() == "train" ? Split::Train : Split::Eval;
        samples.push_back(std::move(s));
    }
    return samples;
}

json eval_suites_to_json(const EvalSuites& suites) {
    json toxic = json::array();
    for (const ToxicEvalItem& item : suites.toxic) {
        toxic.push_back(json{{"prompt", item.prompt},
                             {"toxic_completion", item.toxic_completion},
                             {"refusal_completion", item.refusal_completion}});
    }
    json benign = json::array();
    for (const PreferencePair& pair : suites.benign) {
        benign.push_back(json{{"prompt", pair.prompt},
                              {"chosen", pair.chosen},
                              {"rejected", pair.rejected}});
    }
    json boundary = json::array();
    for (const BoundaryEvalItem& item : suites.boundary_safe) {
        boundary.push_back(json{{"prompt", item.prompt},
                                {"helpful_completion", item.helpful_completion},
                                {"refusal_completion", item.refusal_completion}});
    }
    return json{{"toxic", std::move(toxic)},
                {"benign", std::move(benign)},
                {"boundary_safe", std::move(boundary)}};
}

EvalSuites eval_suites_from_json(const json& j) {
    EvalSuites suites;
    for (const json& item : j.at("toxic")) {
        ToxicEvalItem t;
        t.prompt = item.at("prompt").get<TokenSeq>();
        t.toxic_completion = item.at("toxic_completion").get<TokenSeq>();
        t.refusal_completion = item.at("refusal_completion").get<TokenSeq>();
        suites.toxic.push_back(std::move(t));
    }
    for (const json& item : j.at("benign")) {
        PreferencePair p;
        p.prompt = item.at("prompt").get<TokenSeq>();
        p.chosen = item.at("chosen").get<TokenSeq>();
        p.rejected = item.at("rejected").get<TokenSeq>();
        suites.benign.push_back(std::move(p));
    }
    for (const json& item : j.at("boundary_safe")) {
        BoundaryEvalItem b;
        b.prompt = item.at("prompt").get<TokenSeq>();
        b.helpful_completion = item.at("helpful_completion").get<TokenSeq>();
        b.refusal_completion = item.at("refusal_completion").get<TokenSeq>();
        suites.boundary_safe.push_back(std::move(b));
    }
    return suites;
}

std::string report_to_csv(const RunReport& report) {
    std::ostringstream out;
    out << "round,asr_likelihood,asr_decode,utility_acc,over_refusal,"
           "flagged_fraction,mean_local_loss\n";
    for (const RoundRecord& r : report.rounds) {
        out << r.round << ',';
        if (r.has_metrics) {
            // doubles go through the JSON dumper for stable shortest-roundtrip text
            out << json(r.metrics.asr_likelihood).dump() << ','
                << json(r.metrics.asr_decode).dump() << ','
                << json(r.metrics.utility_acc).dump() << ','
                << json(r.metrics.over_refusal_rate).dump() << ',';
        } else {
            out << ",,,,";
        }
        double flagged_fraction =
            r.san_total > 0 ? static_cast<double>(r.san_flagged) / r.san_total : 0.0;
        out << json(flagged_fraction).dump() << ',' << json(r.mean_local_loss).dump()
            << '\n';
    }
    return out.str();
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string hex_digest(const std::string& content) {
    std::uint64_t h = fnv1a(content);
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace fedsan
