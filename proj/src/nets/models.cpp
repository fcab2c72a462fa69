#include "nets/models.hpp"

#include <cmath>
#include <fstream>

#include "util/binio.hpp"
#include "util/hash.hpp"

namespace tcdiv::nets {

namespace {

constexpr int64_t kHidden1 = 128;
constexpr int64_t kHidden2 = 64;
constexpr uint64_t kCheckpointMagic = 0x31504b4356444354ULL;  // "TCDVCKP1"

}  // namespace

DenseLayer init_dense(int64_t in, int64_t out, Rng& rng) {
    DenseLayer layer{ad::Tensor({in, out}), ad::Tensor({out})};
    double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (int64_t i = 0; i < layer.w.numel(); ++i) layer.w[i] = stddev * rng.normal();
    return layer;
}

RepresentationModel init_representation(int64_t input_dim, Rng& rng) {
    return RepresentationModel{init_dense(input_dim, kHidden1, rng),
                               init_dense(kHidden1, kHidden2, rng),
                               init_dense(kHidden2, kReprDim, rng)};
}

LinearClassifier init_classifier(Rng& rng) {
    return LinearClassifier{init_dense(kReprDim, kNumClasses, rng)};
}

ModelCollection init_collection(int n, int64_t input_dim, uint64_t seed) {
    if (n < 1) throw InvalidArgument("init_collection: n must be >= 1");
    if (input_dim < 1) throw InvalidArgument("init_collection: input_dim must be >= 1");
    ModelCollection c;
    c.models.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
        ModelPair m{init_representation(input_dim, rng), init_classifier(rng)};
        c.models.push_back(std::move(m));
    }
    return c;
}

Critic init_critic(int64_t input_dim, uint64_t seed, int64_t hidden) {
    Rng rng(mix_seed(seed, 0x637269746963ULL));
    return Critic{init_dense(input_dim, hidden, rng), init_dense(hidden, hidden, rng),
                  init_dense(hidden, 1, rng)};
}

namespace {

BoundDense bind_dense(ad::Tape& t, DenseLayer& layer, std::vector<ParamBinding>& out) {
    BoundDense b{t.leaf(layer.w), t.leaf(layer.b)};
    out.push_back({b.w, &layer.w});
    out.push_back({b.b, &layer.b});
    return b;
}

BoundDense bind_dense_frozen(ad::Tape& t, const DenseLayer& layer) {
    return BoundDense{t.constant(layer.w), t.constant(layer.b)};
}

ad::NodeId dense_forward(ad::Tape& t, const BoundDense& l, ad::NodeId x) {
    return t.add_bias(t.matmul(x, l.w), l.b);
}

}  // namespace

BoundRep bind_trainable(ad::Tape& t, RepresentationModel& m, std::vector<ParamBinding>& out) {
    return BoundRep{bind_dense(t, m.l1, out), bind_dense(t, m.l2, out), bind_dense(t, m.l3, out)};
}

BoundRep bind_frozen(ad::Tape& t, const RepresentationModel& m) {
    return BoundRep{bind_dense_frozen(t, m.l1), bind_dense_frozen(t, m.l2),
                    bind_dense_frozen(t, m.l3)};
}

BoundClassifier bind_trainable(ad::Tape& t, LinearClassifier& m, std::vector<ParamBinding>& out) {
    return BoundClassifier{bind_dense(t, m.out, out)};
}

BoundClassifier bind_frozen(ad::Tape& t, const LinearClassifier& m) {
    return BoundClassifier{bind_dense_frozen(t, m.out)};
}

BoundCritic bind_trainable(ad::Tape& t, Critic& m, std::vector<ParamBinding>& out) {
    return BoundCritic{bind_dense(t, m.l1, out), bind_dense(t, m.l2, out),
                       bind_dense(t, m.l3, out)};
}

BoundCritic bind_frozen(ad::Tape& t, const Critic& m) {
    return BoundCritic{bind_dense_frozen(t, m.l1), bind_dense_frozen(t, m.l2),
                       bind_dense_frozen(t, m.l3)};
}

ad::NodeId rep_forward(ad::Tape& t, const BoundRep& m, ad::NodeId x) {
    ad::NodeId h1 = t.relu(dense_forward(t, m.l1, x));
    ad::NodeId h2 = t.relu(dense_forward(t, m.l2, h1));
    return dense_forward(t, m.l3, h2);
}

ad::NodeId classifier_logits(ad::Tape& t, const BoundClassifier& m, ad::NodeId h) {
    return dense_forward(t, m.out, h);
}

namespace {

ad::NodeId critic_mlp(ad::Tape& t, const BoundCritic& critic, ad::NodeId x) {
    ad::NodeId h1 = t.leaky_relu(dense_forward(t, critic.l1, x), kCriticSlope);
    ad::NodeId h2 = t.leaky_relu(dense_forward(t, critic.l2, h1), kCriticSlope);
    ad::NodeId out = dense_forward(t, critic.l3, h2);  // rows x 1
    return t.reshape(out, {t.value(out).rows()});
}

}  // namespace

ad::NodeId critic_score(ad::Tape& t, const BoundCritic& critic,
                        std::span<const ad::NodeId> reps) {
    std::vector<ad::NodeId> normalized;
    normalized.reserve(reps.size());
    for (ad::NodeId r : reps) normalized.push_back(t.l2_normalize_rows(r));
    return critic_mlp(t, critic, t.concat_cols(normalized));
}

ad::NodeId critic_score_raw(ad::Tape& t, const BoundCritic& critic,
                            std::span<const ad::NodeId> parts) {
    ad::NodeId x = parts.size() == 1 ? parts[0] : t.concat_cols(parts);
    return critic_mlp(t, critic, x);
}

std::vector<ad::Tensor*> parameters(ModelPair& m) {
    return {&m.rep.l1.w, &m.rep.l1.b, &m.rep.l2.w, &m.rep.l2.b,
            &m.rep.l3.w, &m.rep.l3.b, &m.cls.out.w, &m.cls.out.b};
}

std::vector<ad::Tensor*> parameters(ModelCollection& c) {
    std::vector<ad::Tensor*> out;
    for (ModelPair& m : c.models)
        for (ad::Tensor* p : parameters(m)) out.push_back(p);
    return out;
}

std::vector<ad::Tensor*> parameters(Critic& c) {
    return {&c.l1.w, &c.l1.b, &c.l2.w, &c.l2.b, &c.l3.w, &c.l3.b};
}

namespace {

uint64_t fingerprint_tensors(const std::vector<ad::Tensor*>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const ad::Tensor* p : params)
        h = fnv1a_bytes(p->data(), static_cast<size_t>(p->numel()) * sizeof(double), h);
    return h;
}

}  // namespace

uint64_t parameter_fingerprint(const ModelCollection& c) {
    return fingerprint_tensors(parameters(const_cast<ModelCollection&>(c)));
}

uint64_t parameter_fingerprint(const Critic& c) {
    return fingerprint_tensors(parameters(const_cast<Critic&>(c)));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint file for writing: " + path.string());
    io::write_u64(os, kCheckpointMagic);
    io::write_u64(os, ckpt.config_hash);
    io::write_u32(os, static_cast<uint32_t>(ckpt.epoch));
    io::write_f64(os, ckpt.val_accuracy);
    io::write_u32(os, static_cast<uint32_t>(ckpt.collection.n()));
    for (const ModelPair& m : ckpt.collection.models)
        for (ad::Tensor* p : parameters(const_cast<ModelPair&>(m))) io::write_tensor(os, *p);
    for (ad::Tensor* p : parameters(const_cast<Critic&>(ckpt.critic))) io::write_tensor(os, *p);
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint file: " + path.string());
    if (io::read_u64(is) != kCheckpointMagic)
        throw FormatError("not a checkpoint file: " + path.string());
    Checkpoint ckpt;
    ckpt.config_hash = io::read_u64(is);
    ckpt.epoch = static_cast<int32_t>(io::read_u32(is));
    ckpt.val_accuracy = io::read_f64(is);
    uint32_t n = io::read_u32(is);
    if (n == 0 || n > 1024) throw FormatError("checkpoint model count is implausible");
    ckpt.collection.models.resize(n);
    for (ModelPair& m : ckpt.collection.models)
        for (ad::Tensor* p : parameters(m)) *p = io::read_tensor(is);
    for (ad::Tensor* p : parameters(ckpt.critic)) *p = io::read_tensor(is);
    return ckpt;
}

}  // namespace tcdiv::nets
