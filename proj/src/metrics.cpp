#include "cmfseg/metrics.hpp"

#include "cmfseg/kvfile.hpp"

#include <sstream>

namespace cmfseg {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    if (den == 0) return 1.0; // both masks empty where it matters
    return double(num) / double(den);
}

} // namespace

ConfusionCounts confusion(const Volume3D& pred, const Volume3D& gt) {
    validate_volume(pred, "confusion pred");
    validate_volume(gt, "confusion gt");
    validate_binary(pred, "confusion pred");
    validate_binary(gt, "confusion gt");
    if (!pred.same_grid(gt))
        throw ValidationError("metrics", "prediction and ground truth grids differ");
    ConfusionCounts c;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data[std::size_t(i)] != 0.0;
        const bool g = gt.data[std::size_t(i)] != 0.0;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
double recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double iou(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn + c.fp); }
double dice(const ConfusionCounts& c) {
    return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}
double accuracy(const ConfusionCounts& c) {
    return ratio(c.tp + c.tn, c.total());
}

BatchReport evaluate_batch(const std::vector<EvalCase>& cases) {
    if (cases.empty()) throw ValidationError("metrics", "empty batch");
    BatchReport report;
    report.mean.name = "mean";
    for (const EvalCase& ec : cases) {
        if (!ec.pred || !ec.gt)
            throw ValidationError("metrics", "case '" + ec.name + "' missing volumes");
        const ConfusionCounts c = confusion(*ec.pred, *ec.gt);
        CaseMetrics m;
        m.name = ec.name;
        m.precision = precision(c);
        m.recall = recall(c);
        m.iou = iou(c);
        m.dice = dice(c);
        m.accuracy = accuracy(c);
        report.mean.precision += m.precision;
        report.mean.recall += m.recall;
        report.mean.iou += m.iou;
        report.mean.dice += m.dice;
        report.mean.accuracy += m.accuracy;
        report.cases.push_back(std::move(m));
    }
    const double n = double(report.cases.size());
    report.mean.precision /= n;
    report.mean.recall /= n;
    report.mean.iou /= n;
    report.mean.dice /= n;
    report.mean.accuracy /= n;
    return report;
}

std::string format_batch_report(const BatchReport& report) {
    std::ostringstream out;
    out << "case\tprecision\trecall\tiou\tdice\taccuracy\n";
    auto row = [&out](const CaseMetrics& m) {
        out << m.name << '\t' << KvFile::format_double(m.precision) << '\t'
            << KvFile::format_double(m.recall) << '\t'
            << KvFile::format_double(m.iou) << '\t'
            << KvFile::format_double(m.dice) << '\t'
            << KvFile::format_double(m.accuracy) << '\n';
    };
    for (const CaseMetrics& m : report.cases) row(m);
    row(report.mean);
    return out.str();
}

} // namespace cmfseg
