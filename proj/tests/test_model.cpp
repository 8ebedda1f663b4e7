#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "meshfield/checkpoint.hpp"
#include "meshfield/model.hpp"
#include "testutil.hpp"

using namespace meshfield;
using Tape = GradientTape<double>;
using Var = Tape::Var;

namespace {

ConditionSchema demo_schema() {
    return ConditionSchema({{"lambda", 2}, {"dirichlet", 1}, {"neumann", 4}});
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.d_emb = 8;
    cfg.patch_size = 4;
    cfg.hilbert_order = 8;
    cfg.d_model = 16;
    cfg.n_encoder = 2;
    cfg.n_decoder = 2;
    cfg.n_head = 2;
    cfg.output_dim = 2;
    return cfg;
}

Mesh random_mesh(std::size_t n, std::uint64_t seed, const ConditionSchema& schema) {
    Rng rng(seed);
    std::vector<std::array<double, 2>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(), rng.uniform()});
    Mesh mesh(pts, schema, BBox{0, 0, 1, 1});
    for (std::size_t i = 0; i < n; ++i) {
        mesh.set_condition("lambda", i, {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        const double r = rng.uniform();
        if (r < 0.25) mesh.set_condition("dirichlet", i, {rng.uniform(-1, 1)});
        else if (r < 0.5) mesh.set_condition("neumann", i, {0, 1, rng.uniform(-1, 1), 0});
    }
    return mesh;
}

std::vector<std::array<double, 2>> random_queries(std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::array<double, 2>> q;
    for (std::size_t i = 0; i < m; ++i) q.push_back({rng.uniform(), rng.uniform()});
    return q;
}

}  // namespace

TEST_CASE("wavelet activation basics") {
    Tape t;
    auto w1 = t.param("w1", Tensor<double>::scalar(1.0));
    auto w2 = t.param("w2", Tensor<double>::scalar(0.0));
    auto x = t.constant(Tensor<double>::vec({kPi / 2}));
    auto y = detail::wavelet(t, x, w1, w2);
    CHECK(t.value(y)[0] == Catch::Approx(1.0));

    auto w2b = t.param("w2b", Tensor<double>::scalar(0.37));
    auto zero = t.constant(Tensor<double>::vec({0.0}));
    auto y0 = detail::wavelet(t, zero, w1, w2b);
    CHECK(t.value(y0)[0] == Catch::Approx(0.37));
}

TEST_CASE("positional encoding shape and determinism") {
    for (std::size_t coord_dim : {std::size_t(1), std::size_t(2), std::size_t(3)}) {
        ModelConfig cfg = small_config();
        cfg.coord_dim = coord_dim;
        auto params = init_params<double>(cfg, demo_schema(), 9);
        Tape t;
        TapeVars<double> v(t, params);
        Tensor<double> coords({5, coord_dim});
        Rng rng(13);
        for (auto& x : coords.data) x = rng.uniform(-1, 1);
        auto enc = positional_encode(t, v, t.constant(coords));
        REQUIRE(t.value(enc).shape == std::vector<std::size_t>{5, cfg.d_emb});
    }

    // identical coordinates map to identical encodings; random distinct pairs differ
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, demo_schema(), 10);
    Tape t;
    TapeVars<double> v(t, params);
    Rng rng(17);
    int distinct = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor<double> pair({2, 2});
        pair(0, 0) = rng.uniform(-1, 1);
        pair(0, 1) = rng.uniform(-1, 1);
        if (trial % 2 == 0) {
            pair(1, 0) = pair(0, 0);
            pair(1, 1) = pair(0, 1);
        } else {
            pair(1, 0) = rng.uniform(-1, 1);
            pair(1, 1) = rng.uniform(-1, 1);
        }
        auto enc = positional_encode(t, v, t.constant(pair));
        double diff = 0;
        for (std::size_t j = 0; j < cfg.d_emb; ++j)
            diff += std::abs(t.value(enc)(0, j) - t.value(enc)(1, j));
        if (trial % 2 == 0) REQUIRE(diff == 0.0);
        else if (diff > 0) ++distinct;
    }
    CHECK(distinct == 50);
}

TEST_CASE("gate emits exact zero blocks for absent groups and bias for present zeros") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, schema, 21);

    ConditionRecord rec;
    rec.values.resize(3);
    rec.values[1] = std::vector<double>{0.0};  // dirichlet present with value zero

    Tape t;
    TapeVars<double> v(t, params);
    auto in = build_embed_inputs<double>(rec, schema, EmbeddingKind::gated);
    auto blocks = gated_blocks(t, v, in, schema);
    const auto& out = t.value(blocks);
    REQUIRE(out.shape == std::vector<std::size_t>{1, schema.expanded_width()});

    // lambda (absent): columns 0..2 exactly zero
    for (std::size_t j = 0; j < 3; ++j) CHECK(out(0, j) == 0.0);
    // dirichlet (present, v=0): equals its expansion bias, nonzero by init
    const auto& bias = params.at("embed.expand.1.b");
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(out(0, 3 + j) == bias[j]);
        CHECK(out(0, 3 + j) != 0.0);
    }
    // neumann (absent): trailing five columns zero
    for (std::size_t j = 5; j < 10; ++j) CHECK(out(0, j) == 0.0);
}

TEST_CASE("gated embedding distinguishes present-zero from absent for every group") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, schema, 33);

    auto embed_one = [&](const ConditionRecord& rec) {
        Tape t;
        TapeVars<double> v(t, params);
        auto in = build_embed_inputs<double>(rec, schema, EmbeddingKind::gated);
        return t.value(embed_conditions(t, v, in, schema, EmbeddingKind::gated));
    };

    for (std::size_t k = 0; k < schema.group_count(); ++k) {
        ConditionRecord absent;
        absent.values.resize(3);
        ConditionRecord present_zero = absent;
        present_zero.values[k] = std::vector<double>(schema.group(k).dim, 0.0);
        const auto ea = embed_one(absent);
        const auto ez = embed_one(present_zero);
        double dist = 0;
        for (std::size_t j = 0; j < ea.size(); ++j) dist += (ea[j] - ez[j]) * (ea[j] - ez[j]);
        INFO("group " << schema.group(k).name);
        CHECK(std::sqrt(dist) > 1e-3);
    }
}

TEST_CASE("toggling one group's presence leaves other blocks unchanged") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, schema, 5);

    ConditionRecord rec;
    rec.values.resize(3);
    rec.values[0] = std::vector<double>{0.4, -0.2};
    rec.values[2] = std::vector<double>{0, 1, 0.3, 0};
    ConditionRecord toggled = rec;
    toggled.values[1] = std::vector<double>{0.9};

    auto blocks_of = [&](const ConditionRecord& r) {
        Tape t;
        TapeVars<double> v(t, params);
        auto in = build_embed_inputs<double>(r, schema, EmbeddingKind::gated);
        return t.value(gated_blocks(t, v, in, schema));
    };
    const auto a = blocks_of(rec), b = blocks_of(toggled);
    for (std::size_t j = 0; j < 3; ++j) CHECK(a(0, j) == b(0, j));          // lambda block
    for (std::size_t j = 5; j < 10; ++j) CHECK(a(0, j) == b(0, j));         // neumann block
    bool dirichlet_changed = a(0, 3) != b(0, 3) || a(0, 4) != b(0, 4);
    CHECK(dirichlet_changed);
}

TEST_CASE("embedding output is one row per node regardless of condition count") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(37, 3, schema);
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, schema, 3);
    Tape t;
    TapeVars<double> v(t, params);
    auto emb = embed_nodes(t, v, mesh, cfg);
    REQUIRE(t.value(emb).shape == std::vector<std::size_t>{37, cfg.d_emb});
}

TEST_CASE("zeroed condition embedding reduces node embedding to positional encoding") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(9, 4, schema);
    ModelConfig cfg = small_config();
    auto params = init_params<double>(cfg, schema, 6);
    // zero the final projection of the condition embedding
    for (auto& v : params.at("embed.mlp2.w").data) v = 0;
    for (auto& v : params.at("embed.mlp2.b").data) v = 0;

    Tape t;
    TapeVars<double> v(t, params);
    auto emb = embed_nodes(t, v, mesh, cfg);
    auto pos = positional_encode(
        t, v, t.constant(normalize_points<double>(mesh.nodes(), mesh.bbox(), cfg.coord_dim)));
    for (std::size_t i = 0; i < t.value(emb).size(); ++i)
        REQUIRE(t.value(emb)[i] == t.value(pos)[i]);
}

TEST_CASE("attention with a single key returns that value row") {
    for (auto kind : {AttentionKind::dot_product, AttentionKind::linear}) {
        ModelConfig cfg = small_config();
        cfg.attention = kind;
        cfg.n_head = 2;
        auto params = init_params<double>(cfg, demo_schema(), 40);
        Tape t;
        TapeVars<double> v(t, params);
        Rng rng(8);
        Tensor<double> xq({3, cfg.d_model}), xkv({1, cfg.d_model});
        for (auto& x : xq.data) x = rng.uniform(-1, 1);
        for (auto& x : xkv.data) x = rng.uniform(-1, 1);

        auto out = attention(t, v, "enc.0.attn", t.constant(xq), t.constant(xkv), cfg);
        // with one key, attended values equal V regardless of the query
        auto val = t.matmul(t.constant(xkv), v("enc.0.attn.v.w"));
        auto expect = detail::dense(t, val, v("enc.0.attn.o.w"), v("enc.0.attn.o.b"));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < cfg.d_model; ++j)
                REQUIRE(t.value(out)(i, j) == Catch::Approx(t.value(expect)(0, j)).margin(1e-12));
    }
}

TEST_CASE("uniform keys give uniform dot-product weights") {
    ModelConfig cfg = small_config();
    cfg.n_head = 1;
    cfg.n_decoder = 1;
    auto params = init_params<double>(cfg, demo_schema(), 41);
    Tape t;
    TapeVars<double> v(t, params);
    Rng rng(9);
    Tensor<double> xq({2, cfg.d_model}), xkv({5, cfg.d_model});
    for (auto& x : xq.data) x = rng.uniform(-1, 1);
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
        const double u = rng.uniform(-1, 1);
        for (std::size_t i = 0; i < 5; ++i) xkv(i, j) = u;
    }
    AttentionCapture cap;
    attention(t, v, "dec.0.attn", t.constant(xq), t.constant(xkv), cfg, &cap, 0);
    REQUIRE(cap.entries.size() == 1);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(cap.entries[0].weights(i, j) == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("both attention kinds produce row-stochastic weights") {
    ModelConfig cfg = small_config();
    cfg.n_head = 1;
    auto params = init_params<double>(cfg, demo_schema(), 42);
    Rng rng(10);
    Tensor<double> xq({4, cfg.d_model}), xkv({4, cfg.d_model});
    for (auto& x : xq.data) x = rng.uniform(-1, 1);
    for (auto& x : xkv.data) x = rng.uniform(-1, 1);

    // dot-product weights via capture
    {
        Tape t;
        TapeVars<double> v(t, params);
        cfg.attention = AttentionKind::dot_product;
        AttentionCapture cap;
        attention(t, v, "enc.0.attn", t.constant(xq), t.constant(xkv), cfg, &cap, 0);
        for (std::size_t i = 0; i < 4; ++i) {
            double row = 0;
            for (std::size_t j = 0; j < 4; ++j) {
                row += cap.entries[0].weights(i, j);
                CHECK(cap.entries[0].weights(i, j) >= 0.0);
            }
            CHECK(row == Catch::Approx(1.0).margin(1e-9));
        }
    }
    // linear-attention weights reconstructed from the kernel features
    {
        Tape t;
        TapeVars<double> v(t, params);
        auto q = t.matmul(t.constant(xq), v("enc.0.attn.q.w"));
        auto k = t.matmul(t.constant(xkv), v("enc.0.attn.k.w"));
        auto qf = t.softmax_rows(q);
        auto kf = t.softmax_rows(k);
        const auto& Q = t.value(qf);
        const auto& K = t.value(kf);
        for (std::size_t i = 0; i < 4; ++i) {
            double den = 0;
            std::vector<double> w(4, 0.0);
            for (std::size_t j = 0; j < 4; ++j) {
                for (std::size_t d = 0; d < cfg.d_model; ++d) w[j] += Q(i, d) * K(j, d);
                den += w[j];
            }
            double row = 0;
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(w[j] / den >= 0.0);
                row += w[j] / den;
            }
            CHECK(row == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("token count follows the patch law") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    for (std::size_t n : {std::size_t(3), std::size_t(10), std::size_t(16), std::size_t(77)}) {
        const Mesh mesh = random_mesh(n, 100 + n, schema);
        auto params = init_params<double>(cfg, schema, 7);
        Tape t;
        TapeVars<double> v(t, params);
        auto enc = encode(t, v, mesh, cfg);
        REQUIRE(t.value(enc.memory).shape[0] == (n + cfg.patch_size - 1) / cfg.patch_size);
        REQUIRE(t.value(enc.memory).shape[1] == cfg.d_model);
    }
}

TEST_CASE("query batches decode independently") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(50, 500, schema);
    ModelConfig cfg = small_config();
    Model<double> model(cfg, schema, 77);

    const auto queries = random_queries(100, 3);
    const auto full = model.predict(mesh, queries);

    // one query alone equals the same query inside the batch
    const auto solo = model.predict(mesh, {queries[42]});
    for (std::size_t j = 0; j < cfg.output_dim; ++j) REQUIRE(solo(0, j) == full(42, j));

    // permuting the batch permutes outputs identically
    auto perm_q = queries;
    std::reverse(perm_q.begin(), perm_q.end());
    const auto rev = model.predict(mesh, perm_q);
    for (std::size_t i = 0; i < queries.size(); ++i)
        for (std::size_t j = 0; j < cfg.output_dim; ++j)
            REQUIRE(rev(queries.size() - 1 - i, j) == full(i, j));

    REQUIRE(full.shape == std::vector<std::size_t>{100, cfg.output_dim});
}

TEST_CASE("mesh node order does not change predictions") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(64, 900, schema);
    ModelConfig cfg = small_config();
    Model<double> model(cfg, schema, 78);

    // all Hilbert codes distinct for this mesh
    auto plan = reserialize(mesh, cfg.hilbert_order, cfg.patch_size);
    std::set<std::uint64_t> codes(plan.codes.begin(), plan.codes.end());
    REQUIRE(codes.size() == mesh.size());

    const auto queries = random_queries(20, 4);
    const auto base = model.predict(mesh, queries);

    Rng rng(5);
    std::vector<std::size_t> order(mesh.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    const auto shuffled = model.predict(mesh.reordered(order), queries);

    for (std::size_t i = 0; i < base.size(); ++i) REQUIRE(shuffled[i] == base[i]);
}

TEST_CASE("forward is deterministic") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(30, 31, schema);
    Model<double> model(small_config(), schema, 79);
    const auto q = random_queries(10, 6);
    const auto a = model.predict(mesh, q);
    const auto b = model.predict(mesh, q);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("encoder-only mode predicts per node and inverts the permutation") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    cfg.encoder_only = true;
    const Mesh mesh = random_mesh(27, 55, schema);
    Model<double> model(cfg, schema, 80);

    const auto out = model.predict(mesh, {});
    REQUIRE(out.shape == std::vector<std::size_t>{27, cfg.output_dim});

    // permuting the mesh permutes per-node outputs consistently
    std::vector<std::size_t> order(mesh.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = mesh.size() - 1 - i;
    const auto flipped = model.predict(mesh.reordered(order), {});
    for (std::size_t i = 0; i < mesh.size(); ++i)
        for (std::size_t j = 0; j < cfg.output_dim; ++j)
            REQUIRE(flipped(i, j) == out(order[i], j));
}

TEST_CASE("patch size one bypasses patching") {
    const auto schema = demo_schema();
    ModelConfig cfg = small_config();
    cfg.patch_size = 1;
    const Mesh mesh = random_mesh(13, 77, schema);
    auto params = init_params<double>(cfg, schema, 8);
    Tape t;
    TapeVars<double> v(t, params);
    auto enc = encode(t, v, mesh, cfg);
    REQUIRE(t.value(enc.memory).shape[0] == 13);
}

TEST_CASE("checkpoint round-trip preserves predictions exactly") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(21, 66, schema);
    Model<double> model(small_config(), schema, 81);
    const auto q = random_queries(7, 7);
    const auto before = model.predict(mesh, q);

    const auto path = (std::filesystem::temp_directory_path() / "meshfield_ckpt.json").string();
    save_checkpoint(model, path);
    const auto loaded = load_checkpoint<double>(path);
    const auto after = loaded.predict(mesh, q);
    for (std::size_t i = 0; i < before.size(); ++i) REQUIRE(after[i] == before[i]);

    CHECK(loaded.config().d_model == model.config().d_model);
    CHECK(loaded.schema() == schema);
}

TEST_CASE("model config json rejects unknown keys and bad shapes") {
    nlohmann::json j = {{"d_model", 32}, {"n_head", 5}};
    CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
    nlohmann::json j2 = {{"banana", 1}};
    CHECK_THROWS_AS(model_config_from_json(j2), ConfigError);
    nlohmann::json j3 = {{"d_model", 32}, {"n_head", 2}, {"attention", "galerkin"}};
    CHECK_THROWS_AS(model_config_from_json(j3), ConfigError);
}

TEST_CASE("full model gradients match finite differences") {
    const auto schema = demo_schema();
    const Mesh mesh = random_mesh(11, 88, schema);
    ModelConfig cfg = small_config();
    cfg.n_encoder = 1;
    cfg.n_decoder = 1;
    auto queries = random_queries(4, 9);

    for (auto kind : {AttentionKind::dot_product, AttentionKind::linear}) {
        cfg.attention = kind;
        testutil::ParamSet params = init_params<double>(cfg, schema, 82);
        testutil::LossBuilder build = [&](Tape& t) {
            TapeVars<double> v(t, params);
            auto out = forward(t, v, mesh, queries, cfg);
            return t.reduce_sum(t.mul(out, out));
        };
        Rng rng(11 + static_cast<int>(kind));
        auto res = testutil::check_gradients(params, build, 25, rng);
        INFO("kind " << to_string(kind) << " worst " << res.worst);
        CHECK(res.max_rel_err <= 1e-5);
    }
}
