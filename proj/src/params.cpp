#include "volift/params.h"

#include <cmath>

#include <openssl/sha.h>

#include "volift/bytes.h"
#include "volift/errors.h"

namespace volift {

namespace {
constexpr std::uint8_t kModelVersion = 1;
constexpr std::uint8_t kAdamVersion = 1;
} // namespace

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes)
{
    std::array<std::uint8_t, 32> out{};
    SHA256(bytes.data(), bytes.size(), out.data());
    return out;
}

ParamStore ParamStore::initial(std::uint64_t seed)
{
    ParamStore s;
    Rng rng(seed);
    s.predict.init(rng);
    s.update.init(rng);
    s.post.init(rng);
    s.entropy.reset();
    s.log_qs = std::log(kInitialQs);
    return s;
}

double ParamStore::qs() const { return std::exp(log_qs); }

std::vector<ParamGroup> ParamStore::groups()
{
    std::vector<ParamGroup> g;
    auto add_net = [&g](const std::string& name, ConvNet& net) {
        for (std::size_t i = 0; i < net.layers().size(); ++i) {
            auto& l = net.layers()[i];
            g.push_back({name + ".conv" + std::to_string(i + 1) + ".kernel", l.kernel(), l.kernel_grad()});
            g.push_back({name + ".conv" + std::to_string(i + 1) + ".bias", l.bias(), l.bias_grad()});
        }
    };
    add_net("predict", predict);
    add_net("update", update);
    add_net("post", post);
    g.push_back({"entropy", entropy.parameters(), entropy.gradients()});
    g.push_back({"log_qs", std::span<double>(&log_qs, 1), std::span<double>(&log_qs_grad, 1)});
    return g;
}

std::size_t ParamStore::parameter_count() const
{
    return predict.parameter_count() + update.parameter_count() + post.parameter_count() +
           entropy.parameters().size() + 1;
}

std::vector<double> ParamStore::flatten() const
{
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const ConvNet* net : {static_cast<const ConvNet*>(&predict), static_cast<const ConvNet*>(&update),
                               static_cast<const ConvNet*>(&post)})
        for (const auto& l : net->layers()) {
            out.insert(out.end(), l.kernel().begin(), l.kernel().end());
            out.insert(out.end(), l.bias().begin(), l.bias().end());
        }
    out.insert(out.end(), entropy.parameters().begin(), entropy.parameters().end());
    out.push_back(log_qs);
    return out;
}

void ParamStore::unflatten(std::span<const double> values)
{
    if (values.size() != parameter_count())
        throw ArgumentError("parameter vector has " + std::to_string(values.size()) + " entries, expected " +
                            std::to_string(parameter_count()));
    std::size_t off = 0;
    for (auto& g : groups()) {
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
                  values.begin() + static_cast<std::ptrdiff_t>(off + g.values.size()), g.values.begin());
        off += g.values.size();
    }
}

void ParamStore::zero_grad()
{
    predict.zero_grad();
    update.zero_grad();
    post.zero_grad();
    entropy.zero_grad();
    log_qs_grad = 0.0;
    has_gradients = false;
}

namespace {

std::vector<std::uint8_t> model_body(const ParamStore& store)
{
    const auto values = store.flatten();
    ByteWriter w;
    w.put_tag("IW3M");
    w.put_u8(kModelVersion);
    w.put_u64(values.size());
    for (double v : values)
        w.put_f64(v);
    return w.take();
}

void check_trailer(std::span<const std::uint8_t> bytes, std::size_t body_len)
{
    const auto digest = sha256(bytes.first(body_len));
    if (!std::equal(digest.begin(), digest.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body_len)))
        throw CorruptModelError("model file hash mismatch");
}

} // namespace

std::vector<std::uint8_t> params_serialize(const ParamStore& store)
{
    auto body = model_body(store);
    const auto digest = sha256(body);
    body.insert(body.end(), digest.begin(), digest.end());
    return body;
}

ParamStore params_deserialize(std::span<const std::uint8_t> bytes)
{
    ByteReader<CorruptModelError> r(bytes);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), "IW3M"))
        throw CorruptModelError("not a model file (missing IW3M magic)");
    const std::uint8_t version = r.get_u8();
    if (version != kModelVersion)
        throw CorruptModelError("unsupported model version " + std::to_string(version));
    const std::uint64_t count = r.get_u64();
    ParamStore store = ParamStore::initial(0);
    if (count != store.parameter_count())
        throw CorruptModelError("model holds " + std::to_string(count) + " parameters, expected " +
                                std::to_string(store.parameter_count()));
    if (r.remaining() != count * 8 + 32)
        throw CorruptModelError("model file truncated or padded: " + std::to_string(r.remaining()) +
                                " bytes after header, expected " + std::to_string(count * 8 + 32));
    check_trailer(bytes, bytes.size() - 32);
    std::vector<double> values(count);
    for (double& v : values)
        v = r.get_f64();
    store.unflatten(values);
    return store;
}

void params_save(const ParamStore& store, const std::string& path) { write_file(path, params_serialize(store)); }

ParamStore params_load(const std::string& path) { return params_deserialize(read_file(path)); }

std::array<std::uint8_t, 32> model_digest(const ParamStore& store) { return sha256(model_body(store)); }

std::array<std::uint8_t, 8> model_hash(const ParamStore& store)
{
    const auto d = model_digest(store);
    std::array<std::uint8_t, 8> h{};
    std::copy(d.begin(), d.begin() + 8, h.begin());
    return h;
}

void adam_save(const ParamStore& store, const std::string& path)
{
    const std::size_t n = store.parameter_count();
    ByteWriter w;
    w.put_tag("IW3A");
    w.put_u8(kAdamVersion);
    w.put_u64(store.adam.step);
    w.put_u64(n);
    for (std::size_t i = 0; i < n; ++i)
        w.put_f64(store.adam.m.empty() ? 0.0 : store.adam.m[i]);
    for (std::size_t i = 0; i < n; ++i)
        w.put_f64(store.adam.v.empty() ? 0.0 : store.adam.v[i]);
    const auto digest = sha256(w.bytes());
    w.put_bytes(digest);
    write_file(path, w.bytes());
}

void adam_load(ParamStore& store, const std::string& path)
{
    const auto bytes = read_file(path);
    ByteReader<CorruptModelError> r(bytes);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), "IW3A") || r.get_u8() != kAdamVersion)
        throw CorruptModelError(path + ": not an optimizer state file");
    const std::uint64_t step = r.get_u64();
    const std::uint64_t n = r.get_u64();
    if (n != store.parameter_count() || r.remaining() != n * 16 + 32)
        throw CorruptModelError(path + ": optimizer state does not match the model");
    check_trailer(bytes, bytes.size() - 32);
    store.adam.step = step;
    store.adam.m.resize(n);
    store.adam.v.resize(n);
    for (auto& x : store.adam.m)
        x = r.get_f64();
    for (auto& x : store.adam.v)
        x = r.get_f64();
}

} // namespace volift
