#include <gtest/gtest.h>

#include "support/fixtures.hpp"

using namespace dvsupport;

// Byte-exact rendered prompts for a fixed three-post fixture. Set
// DVSUPPORT_REGEN_GOLDEN=1 to rewrite the files after an intended change.
TEST(GoldenPrompts, RenderedPromptsMatchCheckedInFiles) {
    for (const auto& [name, prompt] : fixtures::golden_prompts()) {
        const auto path = fixtures::golden_dir() / name;
        if (fixtures::regenerate_golden()) {
            io::write_file_atomic(path, prompt);
            continue;
        }
        ASSERT_TRUE(std::filesystem::exists(path)) << path;
        EXPECT_EQ(io::read_file(path), prompt) << name;
    }
}

TEST(GoldenPrompts, RenderingIsStableAcrossCalls) {
    const auto a = fixtures::golden_prompts();
    const auto b = fixtures::golden_prompts();
    EXPECT_EQ(a, b);
}
