#include <iostream>

#include <CLI11.hpp>

#include "emospace/error.hpp"
#include "emospace_tools/toy.hpp"

int main(int argc, char** argv) {
    CLI::App app{"emospace-toy: write the synthetic toy-LLM fixture"};
    emospace::toy::ToyConfig config;
    std::string out;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--seed", config.seed, "fixture seed");
    app.add_option("--lexicon-words", config.lexicon_words, "rated filler words per language");
    app.add_option("--score-cues", config.score_cues, "cue words in the classifier score table");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto fixture = emospace::toy::make_toy_fixture(config);
        std::cout << emospace::toy::write_toy_fixture(fixture, out).string() << '\n';
    } catch (const emospace::Error& e) {
        std::cerr << "emospace-toy: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
