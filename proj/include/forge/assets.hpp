#pragma once

#include <string_view>

// Compiled-in copies of the files under assets/.
namespace forge::assets {

/// Spatial-presence classification prompt; contains one `{description}` slot.
std::string_view spatial_check_prompt();
/// QA-pair generation prompt; contains one `{description}` slot.
std::string_view qa_generation_prompt();
/// Newline-separated function words ignored by answer/description matching.
std::string_view stopwords();
/// Seed spatial-relation lexicon in taxonomy-file JSON form.
std::string_view default_taxonomy();

}  // namespace forge::assets
