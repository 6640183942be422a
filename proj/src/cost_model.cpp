#include "solvent/cost_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "solvent/oracle.hpp"
#include "solvent/util.hpp"

namespace solvent::pcn {

uint64_t or_node_cost(std::span<const uint64_t> winning_children)
{
    if (winning_children.empty())
        throw ContractViolation("or_node_cost needs at least one winning child");
    uint64_t best = oracle::kCostSaturated;
    for (uint64_t c : winning_children) best = std::min(best, c);
    return oracle::saturating_add(1, best);
}

uint64_t and_node_cost(std::span<const uint64_t> children)
{
    uint64_t sum = 1;
    for (uint64_t c : children) sum = oracle::saturating_add(sum, c);
    return sum;
}

double normalize_cost(uint64_t c, double v_max)
{
    if (c == oracle::kCostSaturated) return v_max;
    return std::min(v_max, std::log2(static_cast<double>(c)));
}

NetworkShape NetworkShape::for_game(game::GameId id, double v_max)
{
    NetworkShape s;
    s.cells = id.cell_count();
    s.input = 2 * s.cells + 1;
    s.v_max = v_max;
    return s;
}

size_t NetworkShape::param_count() const
{
    size_t n = 0;
    int prev = input;
    for (int h : hidden) {
        n += static_cast<size_t>(h) * prev + h;
        prev = h;
    }
    n += static_cast<size_t>(cells) * prev + cells; // policy head
    n += static_cast<size_t>(prev) + 1;             // cost head
    return n;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Offsets of each block inside the flat parameter vector.
struct Layout {
    struct Block {
        size_t w = 0, b = 0;
        int rows = 0, cols = 0;
    };
    std::vector<Block> trunk;
    Block policy;
    Block cost;

    explicit Layout(const NetworkShape& s)
    {
        size_t at = 0;
        int prev = s.input;
        auto block = [&](int rows, int cols) {
            Block blk;
            blk.rows = rows;
            blk.cols = cols;
            blk.w = at;
            at += static_cast<size_t>(rows) * cols;
            blk.b = at;
            at += rows;
            return blk;
        };
        for (int h : s.hidden) {
            trunk.push_back(block(h, prev));
            prev = h;
        }
        policy = block(s.cells, prev);
        cost = block(1, prev);
    }

    static void affine(const Layout::Block& blk, std::span<const double> p,
                       std::span<const double> in, std::span<double> out)
    {
        for (int r = 0; r < blk.rows; ++r) {
            const double* w = p.data() + blk.w + static_cast<size_t>(r) * blk.cols;
            double acc = p[blk.b + r];
            for (int c = 0; c < blk.cols; ++c) acc += w[c] * in[c];
            out[r] = acc;
        }
    }
};

struct Forward {
    std::vector<std::vector<double>> acts; // acts[0] = features, then ReLU outputs
    std::vector<double> logits;
    double raw = 0.0;
    double cost = 0.0;
};

Forward run_forward(const NetworkShape& shape, const Layout& lay, std::span<const double> p,
                    std::span<const double> features)
{
    Forward f;
    f.acts.emplace_back(features.begin(), features.end());
    for (const auto& blk : lay.trunk) {
        std::vector<double> next(blk.rows);
        Layout::affine(blk, p, f.acts.back(), next);
        for (double& x : next) x = x > 0.0 ? x : 0.0;
        f.acts.push_back(std::move(next));
    }
    f.logits.resize(shape.cells);
    Layout::affine(lay.policy, p, f.acts.back(), f.logits);
    double raw[1];
    Layout::affine(lay.cost, p, f.acts.back(), std::span<double>(raw, 1));
    f.raw = raw[0];
    f.cost = shape.v_max * sigmoid(raw[0]);
    return f;
}

std::vector<int> legal_cells(const NetworkShape& shape, std::span<const double> features)
{
    if (features.size() != static_cast<size_t>(shape.input))
        throw ContractViolation("feature vector length mismatch");
    std::vector<int> legal;
    for (int c = 0; c < shape.cells; ++c)
        if (features[c] == 0.0 && features[shape.cells + c] == 0.0) legal.push_back(c);
    if (legal.empty()) throw ContractViolation("no legal cells in feature vector");
    return legal;
}

// log sum exp over the legal logits, stable under extreme weights.
double logsumexp(const std::vector<double>& logits, const std::vector<int>& legal)
{
    double m = logits[legal.front()];
    for (int c : legal) m = std::max(m, logits[c]);
    double sum = 0.0;
    for (int c : legal) sum += std::exp(logits[c] - m);
    return m + std::log(sum);
}

} // namespace

Network Network::zero_init(NetworkShape shape)
{
    Network net;
    net.shape_ = std::move(shape);
    net.params_.assign(net.shape_.param_count(), 0.0);
    return net;
}

Network Network::random_init(NetworkShape shape, uint64_t seed)
{
    Network net = zero_init(std::move(shape));
    const Layout lay(net.shape_);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](const Layout::Block& blk, double scale) {
        for (size_t i = 0; i < static_cast<size_t>(blk.rows) * blk.cols; ++i)
            net.params_[blk.w + i] = scale * normal(rng);
    };
    for (const auto& blk : lay.trunk) fill(blk, std::sqrt(2.0 / blk.cols));
    fill(lay.policy, 0.01);
    fill(lay.cost, 0.01);
    return net;
}

Evaluation Network::evaluate(const game::GameState& s) const
{
    if (s.is_terminal()) throw ContractViolation("evaluate called on terminal state");
    return evaluate_features(s.encode());
}

Evaluation Network::evaluate_features(std::span<const double> features) const
{
    const Layout lay(shape_);
    auto legal = legal_cells(shape_, features);
    Forward f = run_forward(shape_, lay, params_, features);
    Evaluation out;
    out.policy.assign(shape_.cells, 0.0);
    double lse = logsumexp(f.logits, legal);
    double total = 0.0;
    for (int c : legal) {
        out.policy[c] = std::exp(f.logits[c] - lse);
        total += out.policy[c];
    }
    for (int c : legal) out.policy[c] /= total;
    out.cost = f.cost;
    return out;
}

std::vector<Evaluation> Network::evaluate_batch(std::span<const std::vector<double>> rows) const
{
    std::vector<Evaluation> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(evaluate_features(row));
    return out;
}

double Network::loss_and_gradient(std::span<const TrainingSample> batch,
                                  std::vector<double>& grad) const
{
    if (batch.empty()) throw ContractViolation("loss over empty batch");
    const Layout lay(shape_);
    grad.assign(params_.size(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    std::vector<double> dlogits(shape_.cells);
    for (const TrainingSample& sample : batch) {
        auto legal = legal_cells(shape_, sample.features);
        Forward f = run_forward(shape_, lay, params_, sample.features);

        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        double sample_loss = 0.0;
        if (!sample.policy_target.empty()) {
            if (sample.policy_target.size() != static_cast<size_t>(shape_.cells))
                throw ContractViolation("policy target length mismatch");
            double lse = logsumexp(f.logits, legal);
            for (int c : legal) {
                double p = sample.policy_target[c];
                sample_loss += p * (lse - f.logits[c]);
                dlogits[c] = std::exp(f.logits[c] - lse) - p;
            }
        }
        double err = f.cost - sample.cost_target;
        sample_loss += err * err / (shape_.v_max * shape_.v_max);
        total += sample_loss;

        double sig = sigmoid(f.raw);
        double draw = 2.0 * err * sig * (1.0 - sig) / shape_.v_max;

        // Heads.
        std::vector<double> dtrunk(f.acts.back().size(), 0.0);
        const auto& top = f.acts.back();
        for (int r = 0; r < lay.policy.rows; ++r) {
            double d = dlogits[r] * inv_batch;
            if (d == 0.0) continue;
            double* gw = grad.data() + lay.policy.w + static_cast<size_t>(r) * lay.policy.cols;
            const double* w = params_.data() + lay.policy.w + static_cast<size_t>(r) * lay.policy.cols;
            for (int c = 0; c < lay.policy.cols; ++c) {
                gw[c] += d * top[c];
                dtrunk[c] += w[c] * d;
            }
            grad[lay.policy.b + r] += d;
        }
        {
            double d = draw * inv_batch;
            double* gw = grad.data() + lay.cost.w;
            const double* w = params_.data() + lay.cost.w;
            for (int c = 0; c < lay.cost.cols; ++c) {
                gw[c] += d * top[c];
                dtrunk[c] += w[c] * d;
            }
            grad[lay.cost.b] += d;
        }

        // Trunk, top layer first.
        for (size_t li = lay.trunk.size(); li-- > 0;) {
            const auto& blk = lay.trunk[li];
            const auto& in = f.acts[li];
            const auto& out = f.acts[li + 1];
            std::vector<double> dnext(blk.cols, 0.0);
            for (int r = 0; r < blk.rows; ++r) {
                if (out[r] <= 0.0) continue; // ReLU gate
                double d = dtrunk[r];
                if (d == 0.0) continue;
                double* gw = grad.data() + blk.w + static_cast<size_t>(r) * blk.cols;
                const double* w = params_.data() + blk.w + static_cast<size_t>(r) * blk.cols;
                for (int c = 0; c < blk.cols; ++c) {
                    gw[c] += d * in[c];
                    dnext[c] += w[c] * d;
                }
                grad[blk.b + r] += d;
            }
            dtrunk = std::move(dnext);
        }
    }
    return total * inv_batch;
}

double Network::loss(std::span<const TrainingSample> batch) const
{
    if (batch.empty()) throw ContractViolation("loss over empty batch");
    const Layout lay(shape_);
    double total = 0.0;
    for (const TrainingSample& sample : batch) {
        auto legal = legal_cells(shape_, sample.features);
        Forward f = run_forward(shape_, lay, params_, sample.features);
        if (!sample.policy_target.empty()) {
            double lse = logsumexp(f.logits, legal);
            for (int c : legal) total += sample.policy_target[c] * (lse - f.logits[c]);
        }
        double err = f.cost - sample.cost_target;
        total += err * err / (shape_.v_max * shape_.v_max);
    }
    return total / static_cast<double>(batch.size());
}

StepInfo Network::sgd_step(std::span<const TrainingSample> batch, double learning_rate,
                           double grad_clip)
{
    StepInfo info;
    std::vector<double> grad;
    info.loss = loss_and_gradient(batch, grad);
    double norm_sq = 0.0;
    for (double g : grad) norm_sq += g * g;
    info.grad_norm = std::sqrt(norm_sq);
    if (!std::isfinite(info.loss) || !std::isfinite(info.grad_norm)) return info;

    double scale = learning_rate;
    if (grad_clip > 0.0 && info.grad_norm > grad_clip) scale *= grad_clip / info.grad_norm;
    for (size_t i = 0; i < params_.size(); ++i) params_[i] -= scale * grad[i];
    info.applied = true;
    return info;
}

namespace {
constexpr char kCheckpointMagic[4] = {'P', 'C', 'N', 'C'};
constexpr uint16_t kCheckpointFormat = 1;
} // namespace

size_t checkpoint_header_bytes(const NetworkShape& shape)
{
    // magic, format, version, meta, shape, parameter count, trailing checksum.
    return 4 + 2 + 4 + 3 * 8 + (2 + 2 + 1 + 2 * shape.hidden.size() + 8) + 4 + 8;
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c)
{
    if (c.params.size() != c.shape.param_count())
        throw ContractViolation("checkpoint parameter blob does not match shape");
    ByteWriter w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kCheckpointMagic), 4));
    w.u16(kCheckpointFormat);
    w.u32(c.version);
    w.u64(c.meta.train_step);
    w.u64(c.meta.selfplay_samples);
    w.u64(c.meta.solved_samples);
    w.u16(static_cast<uint16_t>(c.shape.input));
    w.u16(static_cast<uint16_t>(c.shape.cells));
    w.u8(static_cast<uint8_t>(c.shape.hidden.size()));
    for (int h : c.shape.hidden) w.u16(static_cast<uint16_t>(h));
    w.f64(c.shape.v_max);
    w.u32(static_cast<uint32_t>(c.params.size()));
    for (double p : c.params) w.f64(p);
    w.u64(fnv1a64(w.data()));
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const uint8_t> bytes)
{
    if (bytes.size() < 8) throw ProtocolError("checkpoint blob truncated");
    uint64_t stored;
    {
        ByteReader tail(bytes.subspan(bytes.size() - 8));
        stored = tail.u64();
    }
    if (fnv1a64(bytes.first(bytes.size() - 8)) != stored)
        throw ProtocolError("checkpoint checksum mismatch");

    ByteReader r(bytes.first(bytes.size() - 8));
    char magic[4];
    for (char& ch : magic) ch = static_cast<char>(r.u8());
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw ProtocolError("bad checkpoint magic");
    if (r.u16() != kCheckpointFormat) throw ProtocolError("unsupported checkpoint format");

    Checkpoint c;
    c.version = r.u32();
    c.meta.train_step = r.u64();
    c.meta.selfplay_samples = r.u64();
    c.meta.solved_samples = r.u64();
    c.shape.input = r.u16();
    c.shape.cells = r.u16();
    c.shape.hidden.resize(r.u8());
    for (int& h : c.shape.hidden) h = r.u16();
    c.shape.v_max = r.f64();
    uint32_t n = r.u32();
    if (n != c.shape.param_count())
        throw ProtocolError("checkpoint parameter count does not match shape");
    c.params.resize(n);
    for (double& p : c.params) p = r.f64();
    r.expect_end();
    return c;
}

void save_checkpoint_file(const Checkpoint& c, const std::filesystem::path& path)
{
    auto bytes = encode_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Network Checkpoint::to_network() const
{
    Network net = Network::zero_init(shape);
    std::copy(params.begin(), params.end(), net.params().begin());
    return net;
}

Checkpoint Checkpoint::of(const Network& net, uint32_t version, CheckpointMeta meta)
{
    Checkpoint c;
    c.version = version;
    c.shape = net.shape();
    c.params.assign(net.params().begin(), net.params().end());
    c.meta = meta;
    return c;
}

void CheckpointSeries::publish(Checkpoint c)
{
    if (latest_ && c.version <= latest_->version)
        throw ContractViolation("checkpoint version " + std::to_string(c.version) +
                                " does not advance past " + std::to_string(latest_->version));
    latest_ = std::move(c);
}

} // namespace solvent::pcn
