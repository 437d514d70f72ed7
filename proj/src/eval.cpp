#include "robkit/eval.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/utf8.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace robkit::eval {

std::vector<std::string> normalize_answer(const std::string& text) {
    // Punctuation becomes a space so hyphenated words split apart; articles
    // are dropped after tokenization.
    std::string spaced;
    for (char32_t cp : utf8::decode(text)) {
        const bool word = (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
                          (cp >= U'0' && cp <= U'9') || cp >= 0x80;
        if (word) {
            utf8::append(spaced, cp >= U'A' && cp <= U'Z' ? cp + 32 : cp);
        } else {
            spaced.push_back(' ');
        }
    }
    std::vector<std::string> tokens;
    std::istringstream ss(spaced);
    std::string tok;
    while (ss >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        tokens.push_back(tok);
    }
    return tokens;
}

SpanScore span_f1_em(const std::string& pred, const std::string& gold) {
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    SpanScore score;
    if (p.empty() && g.empty()) return {1.0, 1};
    if (p.empty() || g.empty()) return {0.0, 0};

    score.em = (p == g) ? 1 : 0;

    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return {0.0, 0};
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
    score.f1 = 2.0 * precision * recall / (precision + recall);
    return score;
}

MacroPrf macro_prf(const std::vector<int>& labels, const std::vector<int>& preds) {
    if (labels.size() != preds.size())
        throw validation_error("macro_prf: labels and predictions differ in length");
    MacroPrf out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pos_true = labels[i] == 1;
        const bool pos_pred = preds[i] == 1;
        if (pos_true && pos_pred) ++out.confusion.tp;
        else if (!pos_true && pos_pred) ++out.confusion.fp;
        else if (pos_true && !pos_pred) ++out.confusion.fn;
        else ++out.confusion.tn;
    }
    const auto& c = out.confusion;
    auto ratio = [&out](std::size_t num, std::size_t den, const char* what) {
        if (den == 0) {
            out.warnings.push_back(std::string("empty denominator for ") + what + "; using 0");
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    // Per-class precision/recall: positive class then negative class.
    const double p_pos = ratio(c.tp, c.tp + c.fp, "positive precision");
    const double r_pos = ratio(c.tp, c.tp + c.fn, "positive recall");
    const double p_neg = ratio(c.tn, c.tn + c.fn, "negative precision");
    const double r_neg = ratio(c.tn, c.tn + c.fp, "negative recall");
    auto f1 = [](double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };
    out.precision = 0.5 * (p_pos + p_neg);
    out.recall = 0.5 * (r_pos + r_neg);
    out.macro_f1 = 0.5 * (f1(p_pos, r_pos) + f1(p_neg, r_neg));
    return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw validation_error("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw validation_error("roc_auc: undefined metric, only one class present");

    // Average ranks with tie handling (Mann-Whitney U).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] == 1) pos_rank_sum += rank[k];
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l == 1);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return {};

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> points{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) ++tp;
            else ++fp;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos)});
        i = j + 1;
    }
    return points;
}

// --- Welch t-test -----------------------------------------------------------

namespace {

// Continued-fraction evaluation for the regularized incomplete beta (Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3.0e-16;
    constexpr double kFpMin = 1.0e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

WelchResult welch_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b) {
    if (sample_a.size() < 2 || sample_b.size() < 2)
        throw validation_error("welch_t_test: each sample needs at least 2 observations");

    auto mean_var = [](const std::vector<double>& s) {
        const double n = static_cast<double>(s.size());
        double mean = 0.0;
        for (double v : s) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : s) var += (v - mean) * (v - mean);
        var /= (n - 1.0);
        return std::pair<double, double>{mean, var};
    };

    const auto [ma, va] = mean_var(sample_a);
    const auto [mb, vb] = mean_var(sample_b);
    if (va == 0.0 && vb == 0.0) {
        if (ma == mb) return {0.0, static_cast<double>(sample_a.size() + sample_b.size() - 2), 1.0, false};
        throw validation_error("welch_t_test: both samples are degenerate (zero variance)");
    }

    const double na = static_cast<double>(sample_a.size());
    const double nb = static_cast<double>(sample_b.size());
    const double sa = va / na;
    const double sb = vb / nb;
    const double t = (ma - mb) / std::sqrt(sa + sb);
    const double df = (sa + sb) * (sa + sb) /
                      (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));

    WelchResult r;
    r.t = t;
    r.df = df;
    r.p = reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if (r.p > 1.0) r.p = 1.0;
    r.significant = r.p < 0.05;
    return r;
}

// --- Report assembly ---------------------------------------------------------

namespace {
SpanSimilarityHook g_span_similarity_hook;
}  // namespace

void set_span_similarity_hook(SpanSimilarityHook hook) {
    g_span_similarity_hook = std::move(hook);
}

namespace {

struct Joined {
    const Instance* instance;
    const Prediction* prediction;
};

BlockMetrics compute_block(const std::vector<Joined>& rows, std::vector<std::string>* warnings,
                           const std::string& block_name, std::vector<RocPoint>* curve) {
    BlockMetrics m;
    m.n = rows.size();
    if (rows.empty()) return m;

    double f1_sum = 0.0, em_sum = 0.0, sim_sum = 0.0;
    std::vector<int> labels, preds;
    std::vector<double> scores;
    labels.reserve(rows.size());
    for (const auto& row : rows) {
        const SpanScore s = span_f1_em(row.prediction->answer_text, row.instance->answer_text);
        f1_sum += s.f1;
        em_sum += s.em;
        if (g_span_similarity_hook)
            sim_sum += g_span_similarity_hook(row.prediction->answer_text,
                                              row.instance->answer_text);
        labels.push_back(row.instance->label == Label::Low ? 1 : 0);
        const int pred_label = row.prediction->label
                                   ? (*row.prediction->label == Label::Low ? 1 : 0)
                                   : (row.prediction->score >= 0.5 ? 1 : 0);
        preds.push_back(pred_label);
        scores.push_back(row.prediction->score);
    }
    m.span_f1 = f1_sum / static_cast<double>(rows.size());
    m.span_em = em_sum / static_cast<double>(rows.size());
    if (g_span_similarity_hook) m.span_sim = sim_sum / static_cast<double>(rows.size());

    MacroPrf prf = macro_prf(labels, preds);
    m.precision = prf.precision;
    m.recall = prf.recall;
    m.macro_f1 = prf.macro_f1;
    m.confusion = prf.confusion;
    for (auto& w : prf.warnings) warnings->push_back(block_name + ": " + w);

    const bool both_classes = std::count(labels.begin(), labels.end(), 1) > 0 &&
                              std::count(labels.begin(), labels.end(), 0) > 0;
    if (both_classes) {
        m.auc = roc_auc(scores, labels);
        if (curve) *curve = roc_curve(scores, labels);
    } else {
        warnings->push_back(block_name + ": ROC AUC undefined (single-class block)");
    }
    return m;
}

}  // namespace

EvalReport build_report(const std::vector<Prediction>& predictions,
                        const std::vector<Instance>& instances) {
    EvalReport report;

    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : instances) by_id[inst.id] = &inst;

    // model -> id -> prediction
    std::map<std::string, std::map<std::string, const Prediction*>> by_model;
    for (const auto& pred : predictions) {
        if (!by_id.count(pred.id))
            throw validation_error("build_report: prediction for unknown instance id '" + pred.id +
                                   "'");
        by_model[pred.model][pred.id] = &pred;
    }

    for (const auto& [model, pred_map] : by_model) {
        std::vector<Joined> all;
        std::map<std::string, std::vector<Joined>> by_type;
        for (const auto& inst : instances) {
            auto it = pred_map.find(inst.id);
            if (it == pred_map.end()) {
                report.missing[model].push_back(inst.id);
                continue;
            }
            Joined row{&inst, it->second};
            all.push_back(row);
            by_type[to_string(inst.bias_type)].push_back(row);
        }
        auto& blocks = report.blocks[model];
        std::vector<RocPoint> curve;
        blocks["overall"] = compute_block(all, &report.warnings, model + "/overall", &curve);
        if (!curve.empty()) report.roc_points[model] = std::move(curve);
        for (const auto& [type, rows] : by_type)
            blocks[type] = compute_block(rows, &report.warnings, model + "/" + type, nullptr);
    }
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "bias_type,metric,model,value\n";
    for (const auto& [model, blocks] : report.blocks) {
        for (const auto& [type, m] : blocks) {
            out << type << ",span_f1," << model << "," << fmt(m.span_f1) << "\n";
            out << type << ",span_em," << model << "," << fmt(m.span_em) << "\n";
            if (m.span_sim) out << type << ",span_sim," << model << "," << fmt(*m.span_sim) << "\n";
            out << type << ",precision," << model << "," << fmt(m.precision) << "\n";
            out << type << ",recall," << model << "," << fmt(m.recall) << "\n";
            out << type << ",macro_f1," << model << "," << fmt(m.macro_f1) << "\n";
            if (m.auc) out << type << ",roc_auc," << model << "," << fmt(*m.auc) << "\n";
            out << type << ",n," << model << "," << m.n << "\n";
            out << type << ",tp," << model << "," << m.confusion.tp << "\n";
            out << type << ",fp," << model << "," << m.confusion.fp << "\n";
            out << type << ",fn," << model << "," << m.confusion.fn << "\n";
            out << type << ",tn," << model << "," << m.confusion.tn << "\n";
        }
    }
    return out.str();
}

std::string roc_points_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "model,fpr,tpr\n";
    for (const auto& [model, points] : report.roc_points)
        for (const auto& p : points) out << model << "," << fmt(p.fpr) << "," << fmt(p.tpr) << "\n";
    return out.str();
}

std::string report_to_markdown(const EvalReport& report) {
    std::ostringstream out;
    out << "# Evaluation report\n\n";

    std::vector<std::string> models;
    for (const auto& [model, _] : report.blocks) models.push_back(model);

    // Collect block names with "overall" first, then bias types in enum order.
    std::vector<std::string> block_names{"overall"};
    for (int t = 0; t < kNumBiasTypes; ++t) {
        const std::string name = to_string(static_cast<BiasType>(t));
        for (const auto& [_, blocks] : report.blocks)
            if (blocks.count(name)) {
                block_names.push_back(name);
                break;
            }
    }

    out << "| Bias type | Metric |";
    for (const auto& m : models) out << " " << m << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < models.size(); ++i) out << "---|";
    out << "\n";

    const char* metric_names[] = {"F1 (span)", "EM", "Precision", "Recall", "Macro F1", "ROC AUC"};
    for (const auto& block : block_names) {
        for (int metric = 0; metric < 6; ++metric) {
            out << "| " << block << " | " << metric_names[metric] << " |";
            for (const auto& model : models) {
                auto bit = report.blocks.at(model).find(block);
                if (bit == report.blocks.at(model).end()) {
                    out << " - |";
                    continue;
                }
                const BlockMetrics& m = bit->second;
                double v = 0.0;
                bool present = true;
                switch (metric) {
                    case 0: v = m.span_f1; break;
                    case 1: v = m.span_em; break;
                    case 2: v = m.precision; break;
                    case 3: v = m.recall; break;
                    case 4: v = m.macro_f1; break;
                    case 5:
                        present = m.auc.has_value();
                        v = present ? *m.auc : 0.0;
                        break;
                }
                if (present) {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), " %.2f |", 100.0 * v);
                    out << buf;
                } else {
                    out << " n/a |";
                }
            }
            out << "\n";
        }
    }

    for (const auto& [model, ids] : report.missing) {
        out << "\nMissing predictions for " << model << " (" << ids.size() << "):";
        for (const auto& id : ids) out << " " << id;
        out << "\n";
    }
    if (!report.warnings.empty()) {
        out << "\nWarnings:\n";
        for (const auto& w : report.warnings) out << "- " << w << "\n";
    }
    return out.str();
}

void write_report_files(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    jsonl::write_text_file(out_dir / "report.csv", report_to_csv(report));
    jsonl::write_text_file(out_dir / "roc_points.csv", roc_points_to_csv(report));
    jsonl::write_text_file(out_dir / "report.md", report_to_markdown(report));
}

std::vector<Prediction> read_predictions_jsonl(const std::filesystem::path& path) {
    std::vector<Prediction> out;
    jsonl::for_each(path, [&](const json& j, std::size_t) {
        Prediction p;
        p.id = j.at("id").get<std::string>();
        p.model = j.value("model", "model");
        p.answer_text = j.value("answer_text", "");
        p.score = j.value("score", 0.5);
        if (j.contains("label")) p.label = label_from_string(j["label"].get<std::string>());
        out.push_back(std::move(p));
    });
    return out;
}

void write_predictions_jsonl(const std::filesystem::path& path,
                             const std::vector<Prediction>& predictions) {
    std::vector<json> rows;
    rows.reserve(predictions.size());
    for (const auto& p : predictions) {
        json j{{"id", p.id}, {"model", p.model}, {"answer_text", p.answer_text}, {"score", p.score}};
        if (p.label) j["label"] = to_string(*p.label);
        rows.push_back(std::move(j));
    }
    jsonl::write_file(path, rows);
}

}  // namespace robkit::eval
