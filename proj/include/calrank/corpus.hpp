#pragma once

#include <cctype>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "calrank/rng.hpp"
#include "calrank/types.hpp"

namespace calrank {

// Splits a CamelCase label into lowercase words: "PlayMusicIntent" ->
// ["play", "music", "intent"].
inline std::vector<std::string> camel_words(const std::string& name) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : name) {
    if (std::isupper(static_cast<unsigned char>(c)) && !cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
    cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

inline void validate_schemas(const std::vector<DomainSchema>& schemas) {
  if (schemas.empty()) throw ConfigError("schema set is empty");
  std::set<std::string> names, all_intents, all_entity_types;
  for (const auto& schema : schemas) {
    if (schema.name.empty()) throw ConfigError("domain name is empty");
    if (!names.insert(schema.name).second)
      throw ConfigError("duplicate domain '" + schema.name + "'");
    if (schema.intents.empty())
      throw ConfigError("domain '" + schema.name + "' has no intents");
    if (schema.entity_types.empty())
      throw ConfigError("domain '" + schema.name + "' has no entity types");
    for (const auto& intent : schema.intents)
      if (!all_intents.insert(intent).second)
        throw ConfigError("intent '" + intent + "' appears in more than one domain");
    for (const auto& et : schema.entity_types)
      if (!all_entity_types.insert(et).second)
        throw ConfigError("entity type '" + et + "' appears in more than one domain");
    for (const auto& [et, phrases] : schema.gazetteer) {
      if (std::find(schema.entity_types.begin(), schema.entity_types.end(), et) ==
          schema.entity_types.end())
        throw ConfigError("gazetteer key '" + et + "' is not an entity type of '" + schema.name +
                          "'");
      for (const auto& p : phrases)
        if (p.empty()) throw ConfigError("empty gazetteer phrase under '" + et + "'");
    }
  }
}

struct Corpus {
  std::vector<Utterance> utterances;
  MiscalibrationConfig skew;  // carried downstream to component scoring
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& phrase) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : phrase) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// "AlbumName" -> "album"; used as a contextual cue before a slot value.
inline std::string type_hint(const std::string& entity_type) {
  auto words = camel_words(entity_type);
  if (words.size() > 1 && words.back() == "name") words.pop_back();
  std::string hint;
  for (const auto& w : words) {
    if (!hint.empty()) hint += ' ';
    hint += w;
  }
  return hint;
}

inline void append_phrase(Utterance& u, const std::string& type, const std::string& phrase) {
  const std::size_t first = u.tokens.size();
  for (auto& tok : split_ws(phrase)) u.tokens.push_back(std::move(tok));
  SlotChunk chunk;
  chunk.type = type;
  chunk.first = first;
  chunk.last = u.tokens.size();
  chunk.text = join_tokens(u.tokens, first, u.tokens.size());
  u.truth.slots.push_back(std::move(chunk));
}

}  // namespace detail

// Draws n template utterances (carrier phrase derived from the intent name,
// slots filled from the gazetteer). Deterministic given the seed. Ambiguity
// comes from phrases shared across domains and from bare carriers like
// "play <title>" that several domains emit.
inline Corpus generate_corpus(const std::vector<DomainSchema>& schemas, std::size_t n,
                              std::uint64_t seed, const MiscalibrationConfig& skew = {}) {
  validate_schemas(schemas);
  skew.validate();
  if (n == 0) throw ConfigError("corpus size must be positive");

  static const std::vector<std::string> kPrefixes = {"please", "can you"};
  static const std::vector<std::string> kSuffixes = {"please", "now", "today", "again"};
  static const std::vector<std::string> kConnectors = {"by", "from", "to", "on"};

  Rng rng = Rng::derive(seed, "corpus");
  Corpus corpus;
  corpus.skew = skew;
  corpus.utterances.reserve(n);

  for (std::size_t idx = 0; idx < n; ++idx) {
    const DomainSchema& schema = schemas[rng.below(schemas.size())];

    std::vector<std::string> fillable;
    for (const auto& et : schema.entity_types) {
      auto it = schema.gazetteer.find(et);
      if (it != schema.gazetteer.end() && !it->second.empty()) fillable.push_back(et);
    }
    if (fillable.empty())
      throw ConfigError("domain '" + schema.name + "' has no gazetteer phrases");

    Utterance u;
    char id[24];
    std::snprintf(id, sizeof(id), "u%06zu", idx);
    u.id = id;
    u.truth.domain = schema.name;
    u.truth.intent = schema.intents[rng.below(schema.intents.size())];

    const double r = rng.uniform();
    std::size_t n_slots = r < 0.2 ? 0 : (r < 0.8 || fillable.size() < 2 ? 1 : 2);

    if (rng.bernoulli(0.12))
      for (auto& tok : detail::split_ws(rng.pick(kPrefixes))) u.tokens.push_back(std::move(tok));

    auto carrier = camel_words(u.truth.intent);
    if (carrier.size() > 1 && carrier.back() == "intent") carrier.pop_back();
    const bool full_carrier = n_slots == 0 || rng.bernoulli(0.35);
    u.tokens.push_back(carrier.front());
    if (full_carrier)
      for (std::size_t w = 1; w < carrier.size(); ++w) u.tokens.push_back(carrier[w]);

    std::string first_type;
    for (std::size_t s = 0; s < n_slots; ++s) {
      std::string type = rng.pick(fillable);
      if (s == 1) {
        while (fillable.size() > 1 && type == first_type) type = rng.pick(fillable);
        u.tokens.push_back(rng.pick(kConnectors));
      } else {
        first_type = type;
        if (rng.bernoulli(0.4)) {
          u.tokens.push_back("the");
          for (auto& tok : detail::split_ws(detail::type_hint(type)))
            u.tokens.push_back(std::move(tok));
        }
      }
      detail::append_phrase(u, type, rng.pick(schema.gazetteer.at(type)));
    }

    if (rng.bernoulli(0.18)) u.tokens.push_back(rng.pick(kSuffixes));

    validate_utterance(u);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

// The built-in three-domain benchmark. The carrier verbs are identical across
// domains and a large pool of titles is shared across all three gazetteers,
// so bare requests like "play moana" are genuinely ambiguous and cross-domain
// confusion exists by construction. Rest words ("music", "book", "video") and
// type hints carry the disambiguating signal when present.
inline std::vector<DomainSchema> default_schemas() {
  const std::vector<std::string> shared = {
      "moana", "frozen",   "dune",  "coco",  "brave", "matilda", "heidi",  "thriller", "jaws",
      "rocky", "the wall", "shrek", "mulan", "cars",  "grease",  "aladdin", "tarzan",  "bambi"};
  auto with_shared = [&](std::vector<std::string> own) {
    own.insert(own.begin(), shared.begin(), shared.end());
    return own;
  };

  DomainSchema music;
  music.name = "Music";
  music.intents = {"PlayMusicIntent", "FindMusicIntent",  "RateMusicIntent",
                   "OpenMusicIntent", "PauseMusicIntent", "ResumeMusicIntent"};
  music.entity_types = {"SongName", "AlbumName", "ArtistName", "PlaylistName"};
  music.gazetteer = {
      {"SongName",
       with_shared({"yesterday", "hey jude", "bad guy", "believer", "imagine"})},
      {"AlbumName", {"abbey road", "nevermind", "rumours", "graceland", "blue"}},
      {"ArtistName",
       {"adele", "queen", "the beatles", "taylor swift", "eminem", "coldplay", "drake",
        "madonna"}},
      {"PlaylistName", {"workout mix", "road trip", "chill vibes", "party hits", "study beats"}},
  };

  DomainSchema books;
  books.name = "Books";
  books.intents = {"PlayBookIntent", "FindBookIntent",  "RateBookIntent",
                   "OpenBookIntent", "PauseBookIntent", "ResumeBookIntent"};
  books.entity_types = {"BookName", "AuthorName", "GenreName", "ChapterName"};
  books.gazetteer = {
      {"BookName",
       with_shared({"ivanhoe", "moby dick", "middlemarch", "emma", "beloved"})},
      {"AuthorName",
       {"tolstoy", "austen", "orwell", "hemingway", "dickens", "atwood", "tolkien", "king"}},
      {"GenreName", {"mystery", "fantasy", "romance", "history", "horror", "poetry"}},
      {"ChapterName", {"chapter one", "chapter two", "prologue", "epilogue", "final chapter"}},
  };

  DomainSchema video;
  video.name = "Video";
  video.intents = {"PlayVideoIntent", "FindVideoIntent",  "RateVideoIntent",
                   "OpenVideoIntent", "PauseVideoIntent", "ResumeVideoIntent"};
  video.entity_types = {"MovieName", "SeriesName", "ActorName", "ChannelName"};
  video.gazetteer = {
      {"MovieName",
       with_shared({"inception", "gladiator", "casablanca", "alien", "titanic"})},
      {"SeriesName", {"breaking bad", "the office", "friends", "dark", "the crown", "lost"}},
      {"ActorName",
       {"tom hanks", "meryl streep", "denzel washington", "cate blanchett", "brad pitt"}},
      {"ChannelName", {"news central", "cooking live", "sports one", "nature world"}},
  };

  return {music, books, video};
}

}  // namespace calrank
