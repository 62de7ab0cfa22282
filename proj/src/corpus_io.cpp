#include "qeadapt/corpus.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace qea {

namespace fs = std::filesystem;

namespace {

void put_u32(std::ostream &out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::string> split_tabs(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Split split_from_name(const std::string &name) {
  if (name == "dev")
    return Split::Dev;
  if (name == "test")
    return Split::Test;
  return Split::Train;
}

} // namespace

void write_frames(const fs::path &path, const Matrix &frames) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io", "cannot write " + path.string());
  out.write("FRM1", 4);
  put_u32(out, static_cast<std::uint32_t>(frames.rows));
  put_u32(out, static_cast<std::uint32_t>(frames.cols));
  put_u32(out, 0);
  for (double v : frames.data)
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  require(out.good(), "io", "write failed for " + path.string());
}

Matrix read_frames(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io", "cannot read " + path.string());
  std::array<unsigned char, 16> header{};
  in.read(reinterpret_cast<char *>(header.data()), 16);
  require(in.gcount() == 16 && std::memcmp(header.data(), "FRM1", 4) == 0, "format",
          "bad FRM1 header in " + path.string());
  const std::uint32_t rows = get_u32(header.data() + 4);
  const std::uint32_t cols = get_u32(header.data() + 8);
  Matrix m(rows, cols);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols * 4);
  in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(static_cast<std::size_t>(in.gcount()) == buf.size(), "format", "truncated frames in " + path.string());
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = static_cast<double>(std::bit_cast<float>(get_u32(buf.data() + 4 * i)));
  return m;
}

void write_corpus(const fs::path &dir, const Corpus &corpus, const Lexicon &lex) {
  fs::create_directories(dir / "frames");
  std::ofstream man(dir / "manifest.tsv");
  require(man.good(), "io", "cannot write manifest in " + dir.string());
  for (const auto &u : corpus.utterances) {
    const std::string rel = "frames/" + u.id + ".frm";
    write_frames(dir / rel, u.frames);
    man << u.id << '\t' << u.speaker << '\t' << u.condition << '\t' << rel << '\t' << join_surfaces(lex, u.reference)
        << '\n';
  }
}

Corpus read_corpus(const fs::path &dir, const Lexicon &lex) {
  std::ifstream man(dir / "manifest.tsv");
  require(man.good(), "io", "cannot read manifest in " + dir.string());
  Corpus c;
  c.name = dir.filename().string();
  if (c.name.empty())
    c.name = dir.parent_path().filename().string();
  c.split = split_from_name(c.name);
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty())
      continue;
    const auto f = split_tabs(line);
    require(f.size() == 5, "format", "manifest line needs 5 fields: " + line);
    Utterance u;
    u.id = f[0];
    u.speaker = std::stoi(f[1]);
    u.condition = std::stoi(f[2]);
    u.frames = read_frames(dir / f[3]);
    u.reference = parse_surfaces(lex, f[4]);
    c.utterances.push_back(std::move(u));
  }
  return c;
}

void write_lexicon(const fs::path &dir, const Lexicon &lex) {
  fs::create_directories(dir);
  std::ofstream ph(dir / "phones.tsv");
  for (std::size_t i = 0; i < lex.phones.size(); ++i)
    ph << i << '\t' << lex.phones[i].symbol << '\t' << to_string(lex.phones[i].cls) << '\n';
  std::ofstream lx(dir / "lexicon.tsv");
  for (const auto &e : lex.entries) {
    lx << e.id << '\t' << e.surface << '\t' << to_string(e.cls) << '\t' << e.n_states << '\t';
    for (std::size_t k = 0; k < e.phones.size(); ++k) {
      if (k)
        lx << ' ';
      lx << (e.phones[k] == Lexicon::kSilencePhone ? std::string("SIL")
                                                   : lex.phones[static_cast<std::size_t>(e.phones[k])].symbol);
    }
    lx << '\n';
  }
  require(ph.good() && lx.good(), "io", "cannot write lexicon in " + dir.string());
  write_frames(dir / "state_means.frm", lex.state_means);
}

Lexicon read_lexicon(const fs::path &dir) {
  Lexicon lex;
  std::ifstream ph(dir / "phones.tsv");
  require(ph.good(), "io", "cannot read phones.tsv in " + dir.string());
  std::string line;
  while (std::getline(ph, line)) {
    if (line.empty())
      continue;
    const auto f = split_tabs(line);
    require(f.size() == 3, "format", "phones.tsv line: " + line);
    Phone p;
    p.symbol = f[1];
    bool found = false;
    for (int c = 0; c < kNumPhoneClasses; ++c)
      if (f[2] == to_string(static_cast<PhoneClass>(c))) {
        p.cls = static_cast<PhoneClass>(c);
        found = true;
      }
    require(found, "format", "unknown phone class " + f[2]);
    lex.phones.push_back(p);
  }
  std::ifstream lx(dir / "lexicon.tsv");
  require(lx.good(), "io", "cannot read lexicon.tsv in " + dir.string());
  int offset = 0;
  while (std::getline(lx, line)) {
    if (line.empty())
      continue;
    const auto f = split_tabs(line);
    require(f.size() == 5, "format", "lexicon.tsv line: " + line);
    LexEntry e;
    e.id = std::stoi(f[0]);
    require(e.id == static_cast<TokenId>(lex.entries.size()), "format", "lexicon ids must be dense");
    e.surface = f[1];
    e.cls = lex_class_from_string(f[2]);
    e.n_states = std::stoi(f[3]);
    std::istringstream ps(f[4]);
    std::string sym;
    while (ps >> sym) {
      if (sym == "SIL") {
        e.phones.push_back(Lexicon::kSilencePhone);
        continue;
      }
      int idx = -1;
      for (std::size_t i = 0; i < lex.phones.size(); ++i)
        if (lex.phones[i].symbol == sym)
          idx = static_cast<int>(i);
      require(idx >= 0, "format", "unknown phone " + sym);
      e.phones.push_back(idx);
    }
    e.first_state = offset;
    offset += e.n_states;
    if (e.surface == "<sil>")
      lex.silence = e.id;
    lex.entries.push_back(std::move(e));
  }
  require(!lex.entries.empty() && lex.silence == static_cast<TokenId>(lex.entries.size() - 1), "format",
          "lexicon must end with the silence token");
  lex.state_means = read_frames(dir / "state_means.frm");
  require(lex.state_means.rows == static_cast<std::size_t>(offset), "format", "state_means rows mismatch");
  return lex;
}

} // namespace qea
