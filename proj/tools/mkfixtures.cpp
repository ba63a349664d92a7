// Builds the fixture corpus: assembles every corpus/src/*.sasm into
// corpus/bin/<name>.so and writes corpus/manifest.json with pinned hashes.
//
// Expectations and provenance come from ";@ key value" directive lines at
// the top of each source:
//   ;@ vulnerable_count N
//   ;@ source_account N
//   ;@ anchor true|false
//   ;@ status ok|unsupported|timeout
//   ;@ provenance free text

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbfscan/corpus.hpp"
#include "sbfscan/elfgen.hpp"

namespace fs = std::filesystem;
using namespace sbfscan;

namespace {

struct Recipe {
  std::string name;
  std::string source;
  FixtureExpect expect;
  std::string provenance;
};

Recipe read_recipe(const fs::path& src) {
  Recipe r;
  r.name = src.stem().string();
  std::ifstream in(src);
  if (!in) throw ScanError(ErrKind::IoError, "cannot open " + src.string());
  std::ostringstream all;
  all << in.rdbuf();
  r.source = all.str();

  std::string line;
  std::istringstream scan(r.source);
  while (std::getline(scan, line)) {
    if (line.rfind(";@ ", 0) != 0) continue;
    std::istringstream ls(line.substr(3));
    std::string key;
    ls >> key;
    std::string rest;
    std::getline(ls, rest);
    while (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
    if (key == "vulnerable_count")
      r.expect.vulnerable_count = std::stoul(rest);
    else if (key == "source_account")
      r.expect.source_account = std::stoi(rest);
    else if (key == "anchor")
      r.expect.anchor = rest == "true";
    else if (key == "status")
      r.expect.status = rest;
    else if (key == "provenance")
      r.provenance = rest;
    else
      throw ScanError(ErrKind::ParseError, r.name + ": unknown directive " + key);
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"assemble the fixture corpus and pin its manifest"};
  std::string corpus_dir = "corpus";
  app.add_option("--corpus", corpus_dir, "corpus directory (contains src/)");
  CLI11_PARSE(app, argc, argv);

  try {
    fs::path src_dir = fs::path(corpus_dir) / "src";
    fs::path bin_dir = fs::path(corpus_dir) / "bin";
    fs::create_directories(bin_dir);

    std::vector<fs::path> sources;
    for (const auto& ent : fs::directory_iterator(src_dir))
      if (ent.is_regular_file() && ent.path().extension() == ".sasm")
        sources.push_back(ent.path());
    std::sort(sources.begin(), sources.end());

    nlohmann::json fixtures = nlohmann::json::array();
    for (const fs::path& src : sources) {
      Recipe r = read_recipe(src);
      Bytes elf = assemble_to_elf(r.source);
      fs::path out = bin_dir / (r.name + ".so");
      {
        std::ofstream os(out, std::ios::binary);
        os.write(reinterpret_cast<const char*>(elf.data()),
                 static_cast<std::streamsize>(elf.size()));
      }
      nlohmann::json fj;
      fj["name"] = r.name;
      fj["path"] = "bin/" + r.name + ".so";
      fj["sha256"] = sha256_hex(elf);
      fj["provenance"] = r.provenance;
      nlohmann::json ex;
      ex["status"] = r.expect.status;
      ex["vulnerable_count"] = r.expect.vulnerable_count;
      if (r.expect.source_account)
        ex["source_account"] = *r.expect.source_account;
      else
        ex["source_account"] = nullptr;
      ex["anchor"] = r.expect.anchor;
      fj["expect"] = ex;
      fixtures.push_back(fj);
      std::cout << r.name << " -> " << out.string() << " (" << elf.size() << " bytes)\n";
    }

    nlohmann::json manifest;
    manifest["fixtures"] = fixtures;
    std::ofstream mf(fs::path(corpus_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cout << sources.size() << " fixtures written\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
