#include "formlab/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "formlab/error.hpp"
#include "formlab/rng.hpp"

namespace formlab {

namespace {

struct Activations {
    std::vector<double> input;  // normalized
    std::array<std::vector<double>, 3> z;
    std::array<std::vector<double>, 2> h;
};

void dense(const DenseLayer& l, const std::vector<double>& in, std::vector<double>& out)
{
    out.resize(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
        const float* row = &l.weights[o * l.in];
        double acc = l.bias[o];
        for (std::size_t i = 0; i < l.in; ++i) acc += static_cast<double>(row[i]) * in[i];
        out[o] = acc;
    }
}

void forward(const MlpModel& m, std::span<const double> x, Activations& a)
{
    if (x.size() != m.input_dim)
        throw ValidationError("model expects input dim " + std::to_string(m.input_dim) + ", got " +
                              std::to_string(x.size()));
    a.input.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a.input[i] = (x[i] - m.normalizer.mean[i]) / m.normalizer.std[i];
    dense(m.layers[0], a.input, a.z[0]);
    a.h[0].resize(a.z[0].size());
    for (std::size_t i = 0; i < a.z[0].size(); ++i) a.h[0][i] = std::max(0.0, a.z[0][i]);
    dense(m.layers[1], a.h[0], a.z[1]);
    a.h[1].resize(a.z[1].size());
    for (std::size_t i = 0; i < a.z[1].size(); ++i) a.h[1][i] = std::max(0.0, a.z[1][i]);
    dense(m.layers[2], a.h[1], a.z[2]);
}

std::vector<double> softmax(std::span<const double> logits)
{
    std::vector<double> p(logits.begin(), logits.end());
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (auto& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

/// Per-sample loss and gradient with respect to the output layer.
double output_loss(const MlpModel& m, const std::vector<double>& z, const LabeledRow& row, std::vector<double>* dz)
{
    double loss = 0.0;
    if (dz) dz->assign(z.size(), 0.0);
    if (m.has_classifier()) {
        const std::size_t k = m.classes();
        const auto p = softmax(std::span<const double>(z.data(), k));
        const auto y = static_cast<std::size_t>(*row.category);
        loss += -std::log(std::max(p[y], 1e-300));
        if (dz)
            for (std::size_t j = 0; j < k; ++j) (*dz)[j] = p[j] - (j == y ? 1.0 : 0.0);
    }
    if (m.has_regressor()) {
        const double diff = z[m.rank_unit()] - *row.rank / 10.0;
        loss += diff * diff;
        if (dz) (*dz)[m.rank_unit()] = 2.0 * diff;
    }
    return loss;
}

/// Backpropagates dz (output gradient) into parameter gradients and, if
/// requested, into the normalized input.
struct Gradients {
    std::array<std::vector<double>, 3> w, b;

    explicit Gradients(const MlpModel& m)
    {
        for (std::size_t l = 0; l < 3; ++l) {
            w[l].assign(m.layers[l].weights.size(), 0.0);
            b[l].assign(m.layers[l].bias.size(), 0.0);
        }
    }
    void zero()
    {
        for (std::size_t l = 0; l < 3; ++l) {
            std::fill(w[l].begin(), w[l].end(), 0.0);
            std::fill(b[l].begin(), b[l].end(), 0.0);
        }
    }
};

std::vector<double> backward(const MlpModel& m, const Activations& a, std::vector<double> delta, Gradients* g,
                             double scale)
{
    const std::array<const std::vector<double>*, 3> inputs = {&a.input, &a.h[0], &a.h[1]};
    for (std::size_t li = 3; li-- > 0;) {
        const DenseLayer& l = m.layers[li];
        const auto& in = *inputs[li];
        if (g) {
            for (std::size_t o = 0; o < l.out; ++o) {
                const double d = delta[o] * scale;
                if (d == 0.0) continue;
                g->b[li][o] += d;
                double* gw = &g->w[li][o * l.in];
                for (std::size_t i = 0; i < l.in; ++i) gw[i] += d * in[i];
            }
        }
        std::vector<double> prev(l.in, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const float* row = &l.weights[o * l.in];
            for (std::size_t i = 0; i < l.in; ++i) prev[i] += d * static_cast<double>(row[i]);
        }
        if (li > 0) {
            const auto& z = a.z[li - 1];
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (!(z[i] > 0.0)) prev[i] = 0.0;
        }
        delta = std::move(prev);
    }
    return delta;
}

void check_heads(const MlpModel& m, const LabeledDataset& ds)
{
    for (std::size_t r = 0; r < ds.rows.size(); ++r) {
        const auto& row = ds.rows[r];
        if (m.has_classifier()) {
            if (!row.category)
                throw ValidationError("row " + std::to_string(r) + " has no category for the classifier head");
            if (static_cast<std::size_t>(*row.category) >= m.classes())
                throw ValidationError("row " + std::to_string(r) + " category exceeds classifier width");
        }
        if (m.has_regressor() && !row.rank)
            throw ValidationError("row " + std::to_string(r) + " has no rank for the regressor head");
    }
}

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::strtod(tok.c_str(), nullptr));
    return out;
}

std::string format_list(const std::vector<double>& v)
{
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        if (i) out += ',';
        out += buf;
    }
    return out;
}

}  // namespace

std::string to_string(HeadKind h)
{
    switch (h) {
    case HeadKind::classifier: return "classifier";
    case HeadKind::regressor: return "regressor";
    case HeadKind::both: return "both";
    }
    return "classifier";
}

HeadKind head_from_string(const std::string& s)
{
    if (s == "classifier" || s == "category") return HeadKind::classifier;
    if (s == "regressor" || s == "rank") return HeadKind::regressor;
    if (s == "both") return HeadKind::both;
    throw ValidationError("unknown head kind '" + s + "'");
}

MlpModel mlp_init(std::size_t input_dim, HeadKind head, std::vector<std::string> label_names, std::uint64_t seed,
                  std::array<std::size_t, 2> hidden)
{
    if (input_dim < 1) throw ValidationError("input dimension must be at least 1");
    if (head != HeadKind::regressor && label_names.empty())
        throw ValidationError("classifier head needs at least one label");
    MlpModel m;
    m.input_dim = input_dim;
    m.head = head;
    if (head == HeadKind::regressor) label_names.clear();
    m.label_names = std::move(label_names);
    m.normalizer = Normalizer::identity(input_dim);
    m.manifest.init_seed = seed;

    const std::array<std::size_t, 4> dims = {input_dim, hidden[0], hidden[1], m.output_dim()};
    SplitMix64 rng(seed);
    for (std::size_t l = 0; l < 3; ++l) {
        auto& layer = m.layers[l];
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.weights.resize(layer.in * layer.out);
        layer.bias.assign(layer.out, 0.0f);
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
        for (auto& w : layer.weights) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    return m;
}

std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> x)
{
    Activations a;
    forward(m, x, a);
    return a.z[2];
}

Prediction mlp_predict(const MlpModel& m, std::span<const double> x)
{
    const auto z = mlp_forward(m, x);
    Prediction p;
    if (m.has_classifier()) p.category = CategoryDistribution{softmax(std::span<const double>(z.data(), m.classes()))};
    if (m.has_regressor()) p.rank = std::clamp(10.0 * z[m.rank_unit()], 0.0, 10.0);
    return p;
}

double mlp_loss(const MlpModel& m, const LabeledDataset& ds, Split side)
{
    Activations a;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& row : ds.rows) {
        if (row.split != side) continue;
        forward(m, row.input, a);
        total += output_loss(m, a.z[2], row, nullptr);
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

std::pair<MlpModel, TrainingHistory> mlp_train(const MlpModel& init, const LabeledDataset& ds, const TrainConfig& config)
{
    ds.validate();
    if (ds.input_dim() != init.input_dim) throw ValidationError("dataset input dimension does not match the model");
    check_heads(init, ds);
    std::vector<std::size_t> train_rows;
    std::vector<std::vector<double>> train_inputs;
    for (std::size_t r = 0; r < ds.rows.size(); ++r) {
        if (ds.rows[r].split != Split::train) continue;
        train_rows.push_back(r);
        train_inputs.push_back(ds.rows[r].input);
    }
    if (train_rows.empty()) throw ValidationError("training split is empty");
    if (ds.side(Split::validation).empty()) throw ValidationError("validation split is empty");
    if (config.batch_size == 0) throw ValidationError("batch size must be positive");

    MlpModel m = init;
    m.normalizer = fit_normalizer(train_inputs);
    m.manifest.config = config;

    Gradients grad(m);
    std::array<std::vector<double>, 3> mw, vw, mb, vb;
    for (std::size_t l = 0; l < 3; ++l) {
        mw[l].assign(m.layers[l].weights.size(), 0.0);
        vw[l].assign(m.layers[l].weights.size(), 0.0);
        mb[l].assign(m.layers[l].bias.size(), 0.0);
        vb[l].assign(m.layers[l].bias.size(), 0.0);
    }
    auto adam = [&config](std::vector<float>& p, const std::vector<double>& g, std::vector<double>& mom,
                          std::vector<double>& vel, double c1, double c2) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            mom[i] = config.beta1 * mom[i] + (1.0 - config.beta1) * g[i];
            vel[i] = config.beta2 * vel[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double mhat = mom[i] / c1, vhat = vel[i] / c2;
            p[i] = static_cast<float>(p[i] - config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon));
        }
    };

    SplitMix64 rng(config.seed);
    TrainingHistory hist;
    MlpModel best = m;
    double best_val = mlp_loss(m, ds, Split::validation);
    std::size_t since_best = 0, step = 0;
    Activations a;
    std::vector<double> dz;
    std::vector<std::size_t> order(train_rows.size());

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = train_rows[i];
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            grad.zero();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& row = ds.rows[order[k]];
                forward(m, row.input, a);
                batch_loss += output_loss(m, a.z[2], row, &dz);
                backward(m, a, dz, &grad, scale);
            }
            ++step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < 3; ++l) {
                adam(m.layers[l].weights, grad.w[l], mw[l], vw[l], c1, c2);
                adam(m.layers[l].bias, grad.b[l], mb[l], vb[l], c1, c2);
            }
            epoch_loss += batch_loss * scale;
            ++batches;
        }
        const double val = mlp_loss(m, ds, Split::validation);
        hist.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        hist.validation_loss.push_back(val);
        if (val < best_val) {
            best_val = val;
            best = m;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            hist.stopped_early = true;
            break;
        }
    }

    best.manifest.config = config;
    best.manifest.trained = true;
    best.manifest.epochs_run = hist.train_loss.size();
    best.manifest.best_epoch = hist.best_epoch;
    best.manifest.train_loss = hist.train_loss;
    best.manifest.validation_loss = hist.validation_loss;
    return {std::move(best), std::move(hist)};
}

double objective_value(const MlpModel& m, std::span<const double> x, Objective obj)
{
    const auto z = mlp_forward(m, x);
    switch (obj.kind) {
    case ObjectiveKind::rank:
        if (!m.has_regressor()) throw ValidationError("rank objective needs a regressor head");
        return 10.0 * z[m.rank_unit()];
    case ObjectiveKind::class_probability: {
        if (!m.has_classifier()) throw ValidationError("probability objective needs a classifier head");
        if (obj.category < 0 || static_cast<std::size_t>(obj.category) >= m.classes())
            throw ValidationError("objective category out of range");
        return softmax(std::span<const double>(z.data(), m.classes()))[static_cast<std::size_t>(obj.category)];
    }
    case ObjectiveKind::margin: {
        if (!m.has_classifier() || m.classes() < 2) throw ValidationError("margin objective needs >= 2 classes");
        const auto p = softmax(std::span<const double>(z.data(), m.classes()));
        const CategoryDistribution dist{p};
        const int top = dist.argmax();
        double second = -1.0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (static_cast<int>(j) != top && p[j] > second) second = p[j];
        return p[static_cast<std::size_t>(top)] - second;
    }
    }
    return 0.0;
}

std::vector<double> input_gradient(const MlpModel& m, std::span<const double> x, Objective obj)
{
    Activations a;
    forward(m, x, a);
    const auto& z = a.z[2];
    std::vector<double> dz(z.size(), 0.0);
    switch (obj.kind) {
    case ObjectiveKind::rank:
        if (!m.has_regressor()) throw ValidationError("rank objective needs a regressor head");
        dz[m.rank_unit()] = 10.0;
        break;
    case ObjectiveKind::class_probability: {
        if (!m.has_classifier()) throw ValidationError("probability objective needs a classifier head");
        if (obj.category < 0 || static_cast<std::size_t>(obj.category) >= m.classes())
            throw ValidationError("objective category out of range");
        const auto p = softmax(std::span<const double>(z.data(), m.classes()));
        const auto c = static_cast<std::size_t>(obj.category);
        for (std::size_t j = 0; j < p.size(); ++j) dz[j] = p[c] * ((j == c ? 1.0 : 0.0) - p[j]);
        break;
    }
    case ObjectiveKind::margin: {
        if (!m.has_classifier() || m.classes() < 2) throw ValidationError("margin objective needs >= 2 classes");
        const auto p = softmax(std::span<const double>(z.data(), m.classes()));
        const auto top = static_cast<std::size_t>(CategoryDistribution{p}.argmax());
        std::size_t second = top == 0 ? 1 : 0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (j != top && p[j] > p[second]) second = j;
        for (std::size_t j = 0; j < p.size(); ++j)
            dz[j] = p[top] * ((j == top ? 1.0 : 0.0) - p[j]) - p[second] * ((j == second ? 1.0 : 0.0) - p[j]);
        break;
    }
    }
    auto dx = backward(m, a, dz, nullptr, 1.0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] /= m.normalizer.std[i];
    return dx;
}

void save_checkpoint(const MlpModel& m, const std::filesystem::path& dir)
{
    save_checkpoint(m, dir, {});
}

void save_checkpoint(const MlpModel& m, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra)
{
    std::filesystem::create_directories(dir);
    std::ostringstream man;
    const auto& c = m.manifest.config;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    man << "format = formlab-mlp 1\n";
    man << "input_dim = " << m.input_dim << "\n";
    man << "head = " << to_string(m.head) << "\n";
    man << "hidden = " << m.layers[0].out << "," << m.layers[1].out << "\n";
    man << "label_count = " << m.label_names.size() << "\n";
    for (std::size_t i = 0; i < m.label_names.size(); ++i) {
        if (m.label_names[i].find('\n') != std::string::npos) throw ValidationError("label names must be single-line");
        man << "label." << i << " = " << m.label_names[i] << "\n";
    }
    man << "init_seed = " << m.manifest.init_seed << "\n";
    man << "config.epochs = " << c.epochs << "\n";
    man << "config.batch_size = " << c.batch_size << "\n";
    man << "config.learning_rate = " << num(c.learning_rate) << "\n";
    man << "config.patience = " << c.patience << "\n";
    man << "config.seed = " << c.seed << "\n";
    man << "config.beta1 = " << num(c.beta1) << "\n";
    man << "config.beta2 = " << num(c.beta2) << "\n";
    man << "config.epsilon = " << num(c.epsilon) << "\n";
    man << "trained = " << (m.manifest.trained ? 1 : 0) << "\n";
    man << "epochs_run = " << m.manifest.epochs_run << "\n";
    man << "best_epoch = " << m.manifest.best_epoch << "\n";
    man << "train_loss = " << format_list(m.manifest.train_loss) << "\n";
    man << "validation_loss = " << format_list(m.manifest.validation_loss) << "\n";
    man << "normalizer.mean = " << format_list(m.normalizer.mean) << "\n";
    man << "normalizer.std = " << format_list(m.normalizer.std) << "\n";
    std::size_t count = 0;
    for (const auto& l : m.layers) count += l.weights.size() + l.bias.size();
    man << "weights = weights.bin\n";
    man << "weight_count = " << count << "\n";
    for (const auto& [k, v] : extra) man << k << " = " << v << "\n";

    std::string payload;
    payload.reserve(count * 4);
    auto put = [&payload](float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof bits);
        for (int s = 0; s < 32; s += 8) payload.push_back(static_cast<char>((bits >> s) & 0xFF));
    };
    for (const auto& l : m.layers) {
        for (float w : l.weights) put(w);
        for (float b : l.bias) put(b);
    }
    {
        std::ofstream out(dir / "weights.bin", std::ios::binary);
        if (!out) throw StoreError("cannot write checkpoint weights in " + dir.string());
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw StoreError("cannot write checkpoint manifest in " + dir.string());
    out << man.str();
}

MlpModel load_checkpoint(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw StoreError("no checkpoint manifest in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&kv, &dir](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("checkpoint " + dir.string() + " lacks '" + k + "'");
        return it->second;
    };
    if (get("format") != "formlab-mlp 1") throw FormatError("unsupported checkpoint format");
    auto u64 = [&get](const std::string& k) { return static_cast<std::uint64_t>(std::stoull(get(k))); };

    MlpModel m;
    m.input_dim = u64("input_dim");
    m.head = head_from_string(get("head"));
    const auto hidden = parse_list(get("hidden"));
    if (hidden.size() != 2) throw FormatError("checkpoint hidden sizes malformed");
    const std::size_t labels = u64("label_count");
    for (std::size_t i = 0; i < labels; ++i) m.label_names.push_back(get("label." + std::to_string(i)));
    auto& man = m.manifest;
    man.init_seed = u64("init_seed");
    man.config.epochs = u64("config.epochs");
    man.config.batch_size = u64("config.batch_size");
    man.config.learning_rate = std::strtod(get("config.learning_rate").c_str(), nullptr);
    man.config.patience = u64("config.patience");
    man.config.seed = u64("config.seed");
    man.config.beta1 = std::strtod(get("config.beta1").c_str(), nullptr);
    man.config.beta2 = std::strtod(get("config.beta2").c_str(), nullptr);
    man.config.epsilon = std::strtod(get("config.epsilon").c_str(), nullptr);
    man.trained = get("trained") == "1";
    man.epochs_run = u64("epochs_run");
    man.best_epoch = u64("best_epoch");
    man.train_loss = parse_list(get("train_loss"));
    man.validation_loss = parse_list(get("validation_loss"));
    m.normalizer.mean = parse_list(get("normalizer.mean"));
    m.normalizer.std = parse_list(get("normalizer.std"));
    if (m.normalizer.mean.size() != m.input_dim || m.normalizer.std.size() != m.input_dim)
        throw FormatError("checkpoint normalizer has wrong dimension");

    const std::array<std::size_t, 4> dims = {m.input_dim, static_cast<std::size_t>(hidden[0]),
                                             static_cast<std::size_t>(hidden[1]), m.output_dim()};
    std::ifstream win(dir / get("weights"), std::ios::binary);
    if (!win) throw StoreError("missing checkpoint weights in " + dir.string());
    std::ostringstream ss;
    ss << win.rdbuf();
    const std::string payload = ss.str();
    std::size_t expected = 0;
    for (std::size_t l = 0; l < 3; ++l) expected += dims[l] * dims[l + 1] + dims[l + 1];
    if (payload.size() != expected * 4 || expected != u64("weight_count"))
        throw FormatError("checkpoint weight payload has wrong size");
    std::size_t pos = 0;
    auto take = [&payload, &pos]() {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[pos + b])) << (8 * b);
        pos += 4;
        float f;
        std::memcpy(&f, &bits, sizeof f);
        return f;
    };
    for (std::size_t l = 0; l < 3; ++l) {
        auto& layer = m.layers[l];
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.weights.resize(layer.in * layer.out);
        layer.bias.resize(layer.out);
        for (auto& w : layer.weights) w = take();
        for (auto& b : layer.bias) b = take();
    }
    return m;
}

}  // namespace formlab
