#pragma once

#include <string>
#include <vector>

namespace tsc::testing {

struct ExtractionCase {
  std::string text;
  std::string expected;
};

// One case per line: input text, a tab, the expected mnemonic. Lines
// starting with '#' are skipped. Throws std::runtime_error if unreadable.
std::vector<ExtractionCase> load_extraction_corpus(const std::string& path);

}  // namespace tsc::testing
