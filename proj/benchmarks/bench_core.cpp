#include <benchmark/benchmark.h>

#include "dat/coverage.hpp"
#include "dat/dataset.hpp"
#include "dat/graph.hpp"
#include "dat/rng.hpp"
#include "dat/train.hpp"
#include "dat/vae.hpp"

namespace {

using namespace dat;

Tensor random_input(Rng& rng, std::size_t dim) {
    Tensor t = Tensor::zeros({dim});
    for (double& v : t.data()) v = rng.uniform();
    return t;
}

Network make_net(std::uint64_t seed) {
    Rng rng(seed);
    return init_network(64, {{32, Activation::Relu}, {10, Activation::Softmax}}, rng);
}

void BM_GraphForwardBackward(benchmark::State& state) {
    const Network net = make_net(1);
    Rng rng(2);
    const std::size_t batch = state.range(0);
    Tensor x = Tensor::zeros({64, batch});
    for (double& v : x.data()) v = rng.uniform();
    std::vector<int> labels(batch);
    for (int& l : labels) l = static_cast<int>(rng.below(10));

    for (auto _ : state) {
        Graph g;
        const NodeId in = g.leaf(x);
        ForwardNodes fw = network_forward(g, net, in);
        const NodeId loss = g.softmax_cross_entropy(fw.logits, labels);
        benchmark::DoNotOptimize(g.forward(loss));
        benchmark::DoNotOptimize(g.backward_all(loss));
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GraphForwardBackward)->Arg(1)->Arg(32)->Arg(128);

void BM_CoverageUpdate(benchmark::State& state) {
    const Network net = make_net(3);
    Rng rng(4);
    CoverageConfig cfg;
    cfg.k = 100;
    std::vector<Tensor> profile_inputs;
    for (int i = 0; i < 50; ++i) profile_inputs.push_back(random_input(rng, 64));
    const ActivationProfile prof = profile(net, profile_inputs);
    CoverageState st = make_coverage_state(net, cfg);

    for (auto _ : state) {
        const Tensor x = random_input(rng, 64);
        update_nc(st, net, x, cfg);
        update_multigranularity(st, prof, net, x, cfg);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CoverageUpdate);

void BM_ReconstructionProbability(benchmark::State& state) {
    SynthBlobs blobs = synth_blobs(2, 64, 60, 6.0, 5);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.rng_seed = 6;
    VaeArch arch;
    arch.encoder_hidden = {32};
    arch.latent_dim = 8;
    const Vae vae = train_vae(blobs.valid, arch, cfg);
    ReconProbConfig rc;
    rc.num_samples = state.range(0);
    rc.rng_seed = 7;
    Rng rng(8);

    for (auto _ : state) {
        const Tensor x = random_input(rng, 64);
        benchmark::DoNotOptimize(reconstruction_probability(vae, x, rc));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReconstructionProbability)->Arg(1)->Arg(10);

void BM_VaeObjectiveGradient(benchmark::State& state) {
    SynthBlobs blobs = synth_blobs(2, 64, 60, 6.0, 9);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.rng_seed = 10;
    VaeArch arch;
    arch.encoder_hidden = {32};
    arch.latent_dim = 8;
    const Vae vae = train_vae(blobs.valid, arch, cfg);
    Rng rng(11);
    const Tensor x0 = random_input(rng, 64);

    for (auto _ : state) {
        std::vector<double> eps(vae.latent_dim);
        for (double& e : eps) e = rng.normal();
        Graph g;
        const NodeId x = g.leaf(x0);
        const NodeId obj = vae_log_density_node(g, vae, x, eps);
        benchmark::DoNotOptimize(g.backward(obj, x));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_VaeObjectiveGradient);

}  // namespace

BENCHMARK_MAIN();
