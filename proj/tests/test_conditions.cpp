#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "meshfield/conditions.hpp"
#include "meshfield/mesh.hpp"

using namespace meshfield;

namespace {

ConditionSchema thermal_schema() {
    return ConditionSchema({{"dirichlet", 1}, {"neumann", 4}});
}

}  // namespace

TEST_CASE("schema widths and lookup") {
    ConditionSchema s({{"lambda", 2}, {"dirichlet", 1}, {"neumann", 4}});
    CHECK(s.raw_width() == 7);
    CHECK(s.expanded_width() == 10);
    CHECK(s.find("dirichlet").value() == 1);
    CHECK_FALSE(s.find("robin").has_value());
    CHECK_THROWS_AS(ConditionSchema({{"a", 1}, {"a", 2}}), ConfigError);
    CHECK_THROWS_AS(ConditionSchema({{"a", 0}}), ConfigError);
}

TEST_CASE("assemble splits blocks and presence") {
    const auto schema = thermal_schema();

    ConditionRecord dirichlet_only;
    dirichlet_only.values = {std::vector<double>{3.5}, std::nullopt};
    auto a = assemble(dirichlet_only, schema);
    CHECK(a.blocks[0] == std::vector<double>{3.5});
    CHECK(a.blocks[1] == std::vector<double>{0, 0, 0, 0});
    CHECK(a.mask == std::vector<bool>{true, false});

    ConditionRecord interior;
    interior.values = {std::nullopt, std::nullopt};
    auto b = assemble(interior, schema);
    CHECK(b.mask == std::vector<bool>{false, false});

    // genuine zero vs missing: identical raw blocks, distinct masks
    ConditionRecord zero_dirichlet;
    zero_dirichlet.values = {std::vector<double>{0.0}, std::nullopt};
    auto c = assemble(zero_dirichlet, schema);
    CHECK(c.blocks[0] == b.blocks[0]);
    CHECK(c.mask != b.mask);

    ConditionRecord wrong;
    wrong.values = {std::vector<double>{1.0, 2.0}, std::nullopt};
    CHECK_THROWS_AS(assemble(wrong, schema), ConfigError);
}

TEST_CASE("assemble is lossless for present groups") {
    Rng rng(3);
    ConditionSchema s({{"lambda", 3}, {"initial", 1}, {"robin", 4}});
    for (int trial = 0; trial < 50; ++trial) {
        ConditionRecord rec;
        rec.values.resize(3);
        for (std::size_t k = 0; k < 3; ++k) {
            if (rng.uniform() < 0.5) continue;
            std::vector<double> v(s.group(k).dim);
            for (auto& x : v) x = rng.uniform(-5, 5);
            rec.values[k] = v;
        }
        const auto a = assemble(rec, s);
        for (std::size_t k = 0; k < 3; ++k) {
            REQUIRE(a.mask[k] == rec.values[k].has_value());
            if (rec.values[k]) REQUIRE(a.blocks[k] == *rec.values[k]);
        }
    }
}

TEST_CASE("single-vector boundary encoding collapses the ambiguous pair") {
    const auto schema = thermal_schema();

    ConditionRecord dirichlet_zero;
    dirichlet_zero.values = {std::vector<double>{0.0}, std::nullopt};
    CHECK(encode_bc_vector(dirichlet_zero, schema) == std::array<double, 5>{0, 0, 0, 0, 0});

    // zero-flux sample with masked normal: same raw vector
    ConditionRecord neumann_zero;
    neumann_zero.values = {std::nullopt, std::vector<double>{0, 0, 0, 0}};
    CHECK(encode_bc_vector(neumann_zero, schema) == std::array<double, 5>{0, 0, 0, 0, 0});

    // but assemble() keeps them apart
    const auto ad = assemble(dirichlet_zero, schema);
    const auto an = assemble(neumann_zero, schema);
    CHECK(ad.blocks == an.blocks);
    CHECK(ad.mask != an.mask);

    ConditionRecord dirichlet_two;
    dirichlet_two.values = {std::vector<double>{2.0}, std::nullopt};
    CHECK(encode_bc_vector(dirichlet_two, schema) == std::array<double, 5>{2, 0, 0, 0, 0});

    ConditionRecord neumann_full;
    neumann_full.values = {std::nullopt, std::vector<double>{0, 1, 0.25, -0.5}};
    CHECK(encode_bc_vector(neumann_full, schema) == std::array<double, 5>{0, 0, 1, 0.25, -0.5});
}

TEST_CASE("mesh stores and returns records") {
    Mesh mesh({{0, 0}, {1, 0}, {1, 1}}, thermal_schema());
    mesh.set_condition("dirichlet", 0, {4.0});
    mesh.set_condition("neumann", 2, {0, 1, 0, 0});

    auto r0 = mesh.record(0);
    CHECK(r0.present(0));
    CHECK_FALSE(r0.present(1));
    CHECK((*r0.values[0])[0] == 4.0);

    auto r1 = mesh.record(1);
    CHECK_FALSE(r1.present(0));

    CHECK_THROWS_AS(mesh.set_condition("robin", 0, {1.0}), ConfigError);
    CHECK_THROWS_AS(mesh.set_condition("dirichlet", 0, {1.0, 2.0}), ConfigError);
}

TEST_CASE("mesh json round-trip") {
    Mesh mesh({{0, 0}, {2, 0}, {2, 3}, {0, 3}}, thermal_schema());
    mesh.set_condition("dirichlet", 0, {1.25});
    mesh.set_condition("neumann", 3, {0, -1, 0.5, 0.125});

    const auto path = (std::filesystem::temp_directory_path() / "meshfield_mesh.json").string();
    save_mesh(mesh, path);
    const Mesh back = load_mesh(path);

    REQUIRE(back.size() == mesh.size());
    CHECK(back.bbox().xmax == 2.0);
    CHECK(back.schema() == mesh.schema());
    CHECK((*back.record(0).values[0])[0] == 1.25);
    CHECK((*back.record(3).values[1])[3] == 0.125);
    CHECK_FALSE(back.record(1).present(0));

    // byte-identical re-save
    save_mesh(back, path + ".2");
    CHECK(read_text_file(path) == read_text_file(path + ".2"));
}

TEST_CASE("mesh csv import") {
    const auto path = (std::filesystem::temp_directory_path() / "meshfield_mesh.csv").string();
    write_text_file(path,
                    "x,y,dirichlet,neumann.0,neumann.1,neumann.2,neumann.3\n"
                    "0,0,5.0,,,,\n"
                    "1,0.5,,0,1,0,0\n"
                    "1,1,,,,,\n");
    const Mesh mesh = load_mesh(path);
    REQUIRE(mesh.size() == 3);
    CHECK(mesh.schema().group(0).name == "dirichlet");
    CHECK(mesh.schema().group(1).dim == 4);
    CHECK((*mesh.record(0).values[0])[0] == 5.0);
    CHECK((*mesh.record(1).values[1])[1] == 1.0);
    CHECK_FALSE(mesh.record(2).present(0));
    CHECK_FALSE(mesh.record(2).present(1));
}
