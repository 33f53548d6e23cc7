#include "faceforge/mapping_network.hpp"

#include <cmath>

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"
#include "faceforge/rng.hpp"

namespace faceforge {

namespace {

constexpr std::string_view kNetworkMagic = "MNET";
constexpr float kLeakySlope = 0.01f;

using RowMajorXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXf activate(const Eigen::MatrixXf& x, Activation a)
{
    if (a == Activation::ReLU) {
        return x.cwiseMax(0.0f);
    }
    return x.unaryExpr([](float v) { return v > 0.0f ? v : kLeakySlope * v; });
}

Eigen::MatrixXf activation_grad(const Eigen::MatrixXf& pre, Activation a)
{
    const float neg = a == Activation::ReLU ? 0.0f : kLeakySlope;
    return pre.unaryExpr([neg](float v) { return v > 0.0f ? 1.0f : neg; });
}

} // namespace

std::string_view to_string(Activation a)
{
    return a == Activation::ReLU ? "relu" : "leaky_relu";
}

Activation parse_activation(std::string_view s)
{
    if (s == "relu") {
        return Activation::ReLU;
    }
    if (s == "leaky_relu") {
        return Activation::LeakyReLU;
    }
    throw Error("unknown nonlinearity '" + std::string(s) + "'");
}

MappingNetwork MappingNetwork::make(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                                    Activation activation, std::uint64_t seed)
{
    Rng rng(substream_seed(seed, "init"));
    MappingNetwork net;
    net.activation = activation;
    std::size_t fan_in = input_dim;
    std::vector<std::size_t> widths = hidden;
    widths.push_back(output_dim);
    for (std::size_t out : widths) {
        DenseLayer layer;
        layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                layer.weight(r, c) = static_cast<float>(rng.uniform(-bound, bound));
            }
        }
        layer.bias = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(out));
        net.layers.push_back(std::move(layer));
        fan_in = out;
    }
    return net;
}

std::vector<std::size_t> MappingNetwork::hidden_widths() const
{
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        out.push_back(static_cast<std::size_t>(layers[l].weight.rows()));
    }
    return out;
}

std::size_t MappingNetwork::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

ForwardTrace forward_trace(const MappingNetwork& net, const Eigen::MatrixXf& inputs)
{
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
        throw DimensionError("network expects inputs of size " + std::to_string(net.input_dim()) + ", got " +
                             std::to_string(inputs.rows()));
    }
    ForwardTrace t;
    Eigen::MatrixXf x = net.input_scale * inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        Eigen::MatrixXf z = layer.weight * x;
        z.colwise() += layer.bias;
        t.inputs.push_back(std::move(x));
        const bool last = l + 1 == net.layers.size();
        x = last ? z : activate(z, net.activation);
        t.pre.push_back(std::move(z));
    }
    t.output = std::move(x);
    return t;
}

Eigen::MatrixXf forward_batch(const MappingNetwork& net, const Eigen::MatrixXf& inputs)
{
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
        throw DimensionError("network expects inputs of size " + std::to_string(net.input_dim()) + ", got " +
                             std::to_string(inputs.rows()));
    }
    Eigen::MatrixXf x = net.input_scale * inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Eigen::MatrixXf z = net.layers[l].weight * x;
        z.colwise() += net.layers[l].bias;
        x = l + 1 == net.layers.size() ? std::move(z) : activate(z, net.activation);
    }
    return x;
}

std::vector<float> forward(const MappingNetwork& net, std::span<const float> input)
{
    const Eigen::Map<const Eigen::VectorXf> x(input.data(), static_cast<Eigen::Index>(input.size()));
    const Eigen::MatrixXf y = forward_batch(net, x);
    return {y.data(), y.data() + y.size()};
}

std::vector<LayerGradient> backward(const MappingNetwork& net, const ForwardTrace& trace, const Eigen::MatrixXf& grad_output)
{
    std::vector<LayerGradient> grads(net.layers.size());
    Eigen::MatrixXf delta = grad_output;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        if (i + 1 != net.layers.size()) {
            delta = delta.cwiseProduct(activation_grad(trace.pre[i], net.activation));
        }
        grads[i].weight = delta * trace.inputs[i].transpose();
        grads[i].bias = delta.rowwise().sum();
        if (i > 0) {
            delta = net.layers[i].weight.transpose() * delta;
        }
    }
    return grads;
}

void save_network(const MappingNetwork& net, const std::filesystem::path& path)
{
    nlohmann::ordered_json header;
    header["format_version"] = 1;
    header["input_dim"] = net.input_dim();
    header["hidden"] = net.hidden_widths();
    header["output_dim"] = net.output_dim();
    header["nonlinearity"] = to_string(net.activation);
    header["input_scale"] = net.input_scale;
    binio::ContainerWriter w(kNetworkMagic, header);
    for (const auto& layer : net.layers) {
        const RowMajorXf wr = layer.weight;
        w.append<float>({wr.data(), static_cast<std::size_t>(wr.size())});
        w.append<float>({layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
    }
    w.save(path);
}

MappingNetwork load_network(const std::filesystem::path& path)
{
    binio::ContainerReader r(binio::read_file(path), kNetworkMagic);
    const auto& h = r.header();
    const auto input_dim = binio::header_field<std::size_t>(h, "input_dim");
    const auto hidden = binio::header_field<std::vector<std::size_t>>(h, "hidden");
    const auto output_dim = binio::header_field<std::size_t>(h, "output_dim");
    if (input_dim == 0 || output_dim == 0) {
        throw FormatError(FormatError::Kind::MalformedHeader, "network header has zero dimensions");
    }
    MappingNetwork net;
    net.activation = parse_activation(binio::header_field<std::string>(h, "nonlinearity"));
    net.input_scale = binio::header_field<float>(h, "input_scale");
    if (!(net.input_scale > 0.0f) || !std::isfinite(net.input_scale)) {
        throw FormatError(FormatError::Kind::MalformedHeader, "network input_scale must be positive");
    }
    std::vector<std::size_t> widths = hidden;
    widths.push_back(output_dim);
    std::size_t fan_in = input_dim;
    for (std::size_t out : widths) {
        const auto wv = r.read<float>(out * fan_in);
        const auto bv = r.read<float>(out);
        DenseLayer layer;
        layer.weight = Eigen::Map<const RowMajorXf>(wv.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in));
        layer.bias = Eigen::Map<const Eigen::VectorXf>(bv.data(), static_cast<Eigen::Index>(out));
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw FormatError(FormatError::Kind::NonFinite, "network has non-finite parameters");
        }
        net.layers.push_back(std::move(layer));
        fan_in = out;
    }
    r.expect_end();
    return net;
}

void check_compatible(const MappingNetwork& net, const MorphableModel& model)
{
    if (net.output_dim() != model.n_shape) {
        throw DimensionError("network predicts " + std::to_string(net.output_dim()) + " shape coefficients, model has " +
                             std::to_string(model.n_shape));
    }
}

} // namespace faceforge
