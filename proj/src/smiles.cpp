#include "aroma/smiles.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>

namespace aroma {

namespace {

constexpr std::array<const char*, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg",
    "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr",
    "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

const std::unordered_map<std::string_view, int>& element_table() {
  static const auto* table = [] {
    auto* m = new std::unordered_map<std::string_view, int>();
    for (size_t i = 0; i < kElements.size(); ++i) {
      m->emplace(kElements[i], static_cast<int>(i) + 1);
    }
    return m;
  }();
  return *table;
}

// Aromatic symbols accepted inside brackets.
const std::unordered_map<std::string_view, int>& aromatic_table() {
  static const std::unordered_map<std::string_view, int> table = {
      {"b", 5}, {"c", 6}, {"n", 7}, {"o", 8},
      {"p", 15}, {"s", 16}, {"se", 34}, {"as", 33}};
  return table;
}

struct PendingBond {
  BondOrder order = BondOrder::Single;
  size_t position = 0;
};

struct RingOpen {
  uint32_t atom = 0;
  std::optional<BondOrder> order;
  size_t position = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Molecule run() {
    // Leading/trailing ASCII whitespace is tolerated; anything else is not.
    while (!text_.empty() && std::isspace(static_cast<unsigned char>(text_.back())))
      text_.remove_suffix(1);
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    if (pos_ >= text_.size())
      throw SmilesError(SmilesErrorKind::EmptyInput, 0, "empty SMILES");
    mol_.source.assign(text_.begin(), text_.end());

    while (pos_ < text_.size()) step();

    if (pending_)
      throw SmilesError(SmilesErrorKind::DanglingBond, pending_->position,
                        "bond symbol not followed by an atom");
    if (!branch_stack_.empty())
      throw SmilesError(SmilesErrorKind::UnbalancedBranch,
                        branch_stack_.back().position,
                        "unclosed branch");
    if (!open_rings_.empty())
      throw SmilesError(SmilesErrorKind::UnclosedRing,
                        open_rings_.begin()->second.position,
                        "unmatched ring-closure digit");
    return std::move(mol_);
  }

 private:
  struct Frame {
    int prev;
    size_t position;
    bool saw_atom = false;
  };

  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '-': set_pending(BondOrder::Single); return;
      case '=': set_pending(BondOrder::Double); return;
      case '#': set_pending(BondOrder::Triple); return;
      case ':': set_pending(BondOrder::Aromatic); return;
      case '/':
      case '\\':
        ++mol_.stereo_warnings;
        set_pending(BondOrder::Single);
        return;
      case '(': open_branch(); return;
      case ')': close_branch(); return;
      case '%': ring_closure(parse_percent_ring()); return;
      case '[': bracket_atom(); return;
      default: break;
    }
    if (c >= '0' && c <= '9') {
      ring_closure(static_cast<int>(c - '0'));
      ++pos_;
      return;
    }
    organic_atom();
  }

  void set_pending(BondOrder order) {
    if (pending_)
      throw SmilesError(SmilesErrorKind::DanglingBond, pos_,
                        "two consecutive bond symbols");
    pending_ = PendingBond{order, pos_};
    ++pos_;
  }

  void open_branch() {
    if (prev_ < 0)
      throw SmilesError(SmilesErrorKind::UnbalancedBranch, pos_,
                        "branch opened before any atom");
    if (pending_)
      throw SmilesError(SmilesErrorKind::DanglingBond, pending_->position,
                        "bond symbol before '('");
    branch_stack_.push_back(Frame{prev_, pos_, false});
    ++pos_;
  }

  void close_branch() {
    if (branch_stack_.empty())
      throw SmilesError(SmilesErrorKind::UnbalancedBranch, pos_,
                        "')' without matching '('");
    if (pending_)
      throw SmilesError(SmilesErrorKind::DanglingBond, pending_->position,
                        "bond symbol before ')'");
    if (!branch_stack_.back().saw_atom)
      throw SmilesError(SmilesErrorKind::UnbalancedBranch, pos_,
                        "empty branch");
    prev_ = branch_stack_.back().prev;
    branch_stack_.pop_back();
    ++pos_;
  }

  int parse_percent_ring() {
    const size_t start = pos_;
    ++pos_;
    if (pos_ + 1 >= text_.size() || !std::isdigit((unsigned char)text_[pos_]) ||
        !std::isdigit((unsigned char)text_[pos_ + 1]))
      throw SmilesError(SmilesErrorKind::UnclosedRing, start,
                        "'%' must be followed by two digits");
    const int num = (text_[pos_] - '0') * 10 + (text_[pos_ + 1] - '0');
    pos_ += 2;
    return num;
  }

  void ring_closure(int number) {
    if (prev_ < 0)
      throw SmilesError(SmilesErrorKind::UnclosedRing, pos_,
                        "ring closure before any atom");
    std::optional<BondOrder> order;
    size_t at = pos_;
    if (pending_) {
      order = pending_->order;
      at = pending_->position;
      pending_.reset();
    }
    auto it = open_rings_.find(number);
    if (it == open_rings_.end()) {
      open_rings_.emplace(number,
                          RingOpen{static_cast<uint32_t>(prev_), order, at});
      return;
    }
    const RingOpen open = it->second;
    open_rings_.erase(it);
    if (open.atom == static_cast<uint32_t>(prev_))
      throw SmilesError(SmilesErrorKind::RingBondConflict, at,
                        "ring bond closes on its opening atom");
    if (open.order && order && *open.order != *order)
      throw SmilesError(SmilesErrorKind::RingBondConflict, at,
                        "conflicting bond orders at ring closure");
    std::optional<BondOrder> chosen = order ? order : open.order;
    add_bond(open.atom, static_cast<uint32_t>(prev_), chosen, at);
  }

  void add_bond(uint32_t a, uint32_t b, std::optional<BondOrder> explicit_order,
                size_t at) {
    for (const Bond& e : mol_.bonds) {
      if ((e.a == a && e.b == b) || (e.a == b && e.b == a))
        throw SmilesError(SmilesErrorKind::RingBondConflict, at,
                          "duplicate bond between the same atoms");
    }
    BondOrder order;
    if (explicit_order) {
      order = *explicit_order;
    } else if (mol_.atoms[a].aromatic && mol_.atoms[b].aromatic) {
      order = BondOrder::Aromatic;
    } else {
      order = BondOrder::Single;
    }
    mol_.bonds.push_back(Bond{a, b, order});
  }

  void attach_atom(Atom atom, size_t at) {
    const uint32_t idx = static_cast<uint32_t>(mol_.atoms.size());
    mol_.atoms.push_back(atom);
    if (prev_ >= 0) {
      std::optional<BondOrder> order;
      if (pending_) {
        order = pending_->order;
        pending_.reset();
      }
      add_bond(static_cast<uint32_t>(prev_), idx, order, at);
    } else if (pending_) {
      throw SmilesError(SmilesErrorKind::DanglingBond, pending_->position,
                        "bond symbol before the first atom");
    }
    prev_ = static_cast<int>(idx);
    if (!branch_stack_.empty()) branch_stack_.back().saw_atom = true;
  }

  void organic_atom() {
    const size_t at = pos_;
    const char c = text_[pos_];
    Atom atom;
    // Two-letter organic-subset symbols first.
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      atom.element = 17;
      pos_ += 2;
    } else if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      atom.element = 35;
      pos_ += 2;
    } else {
      switch (c) {
        case 'B': atom.element = 5; break;
        case 'C': atom.element = 6; break;
        case 'N': atom.element = 7; break;
        case 'O': atom.element = 8; break;
        case 'P': atom.element = 15; break;
        case 'S': atom.element = 16; break;
        case 'F': atom.element = 9; break;
        case 'I': atom.element = 53; break;
        case 'b': atom.element = 5; atom.aromatic = true; break;
        case 'c': atom.element = 6; atom.aromatic = true; break;
        case 'n': atom.element = 7; atom.aromatic = true; break;
        case 'o': atom.element = 8; atom.aromatic = true; break;
        case 'p': atom.element = 15; atom.aromatic = true; break;
        case 's': atom.element = 16; atom.aromatic = true; break;
        default:
          throw SmilesError(SmilesErrorKind::UnknownElement, pos_,
                            std::string("unsupported character '") + c + "'");
      }
      ++pos_;
    }
    attach_atom(atom, at);
  }

  void bracket_atom() {
    const size_t start = pos_;
    ++pos_;  // '['
    Atom atom;

    // Isotope.
    size_t digits = 0;
    int isotope = 0;
    while (pos_ < text_.size() && std::isdigit((unsigned char)text_[pos_]) &&
           digits < 4) {
      isotope = isotope * 10 + (text_[pos_] - '0');
      ++digits;
      ++pos_;
    }
    if (digits > 0) atom.isotope = isotope;

    // Element symbol.
    if (pos_ >= text_.size())
      throw SmilesError(SmilesErrorKind::MalformedBracketAtom, start,
                        "unterminated bracket atom");
    const char c = text_[pos_];
    if (std::isupper((unsigned char)c)) {
      if (pos_ + 1 < text_.size() && std::islower((unsigned char)text_[pos_ + 1])) {
        const std::string_view two = text_.substr(pos_, 2);
        auto it = element_table().find(two);
        if (it != element_table().end()) {
          atom.element = it->second;
          pos_ += 2;
        } else {
          const std::string_view one = text_.substr(pos_, 1);
          auto it1 = element_table().find(one);
          if (it1 == element_table().end())
            throw SmilesError(SmilesErrorKind::UnknownElement, pos_,
                              "unknown element symbol");
          atom.element = it1->second;
          ++pos_;
        }
      } else {
        const std::string_view one = text_.substr(pos_, 1);
        auto it1 = element_table().find(one);
        if (it1 == element_table().end())
          throw SmilesError(SmilesErrorKind::UnknownElement, pos_,
                            "unknown element symbol");
        atom.element = it1->second;
        ++pos_;
      }
    } else if (std::islower((unsigned char)c)) {
      std::string_view sym = text_.substr(pos_, 1);
      if (pos_ + 1 < text_.size() && std::islower((unsigned char)text_[pos_ + 1])) {
        const std::string_view two = text_.substr(pos_, 2);
        if (aromatic_table().count(two)) sym = two;
      }
      auto it = aromatic_table().find(sym);
      if (it == aromatic_table().end())
        throw SmilesError(SmilesErrorKind::UnknownElement, pos_,
                          "unknown aromatic symbol in bracket");
      atom.element = it->second;
      atom.aromatic = true;
      pos_ += sym.size();
    } else {
      throw SmilesError(SmilesErrorKind::MalformedBracketAtom, pos_,
                        "expected element symbol in bracket");
    }

    // Chirality - accepted, discarded. '@' and '@@' are one marker each.
    while (pos_ < text_.size() && text_[pos_] == '@') {
      ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '@') ++pos_;
      ++mol_.stereo_warnings;
    }

    // H-count. Bracket atoms have no implicit hydrogens: absent means 0.
    int hcount = 0;
    if (pos_ < text_.size() && text_[pos_] == 'H') {
      ++pos_;
      hcount = 1;
      if (pos_ < text_.size() && std::isdigit((unsigned char)text_[pos_])) {
        hcount = text_[pos_] - '0';
        ++pos_;
      }
    }
    atom.explicit_h = hcount;

    // Charge.
    int charge = 0;
    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      const char sign_char = text_[pos_];
      const int sign = sign_char == '+' ? 1 : -1;
      int magnitude = 0;
      while (pos_ < text_.size() && text_[pos_] == sign_char) {
        ++magnitude;
        ++pos_;
      }
      if (magnitude == 1 && pos_ < text_.size() &&
          std::isdigit((unsigned char)text_[pos_])) {
        magnitude = text_[pos_] - '0';
        ++pos_;
      }
      charge = sign * magnitude;
    }
    if (charge < -4 || charge > 4)
      throw SmilesError(SmilesErrorKind::MalformedBracketAtom, start,
                        "formal charge outside [-4, 4]");
    atom.formal_charge = charge;

    // Atom class - accepted, discarded.
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      if (pos_ >= text_.size() || !std::isdigit((unsigned char)text_[pos_]))
        throw SmilesError(SmilesErrorKind::MalformedBracketAtom, start,
                          "atom class ':' without digits");
      while (pos_ < text_.size() && std::isdigit((unsigned char)text_[pos_]))
        ++pos_;
    }

    if (pos_ >= text_.size() || text_[pos_] != ']')
      throw SmilesError(SmilesErrorKind::MalformedBracketAtom, start,
                        "unterminated bracket atom");
    ++pos_;
    attach_atom(atom, start);
  }

  std::string_view text_;
  size_t pos_ = 0;
  Molecule mol_;
  int prev_ = -1;
  std::optional<PendingBond> pending_;
  std::vector<Frame> branch_stack_;
  std::map<int, RingOpen> open_rings_;
};

}  // namespace

SmilesError::SmilesError(SmilesErrorKind kind, size_t position,
                         const std::string& what)
    : Error(std::string(to_string(kind)) + " at position " +
            std::to_string(position) + ": " + what),
      kind_(kind),
      position_(position) {}

const char* to_string(SmilesErrorKind kind) {
  switch (kind) {
    case SmilesErrorKind::EmptyInput: return "EmptyInput";
    case SmilesErrorKind::UnknownElement: return "UnknownElement";
    case SmilesErrorKind::MalformedBracketAtom: return "MalformedBracketAtom";
    case SmilesErrorKind::UnbalancedBranch: return "UnbalancedBranch";
    case SmilesErrorKind::UnclosedRing: return "UnclosedRing";
    case SmilesErrorKind::RingBondConflict: return "RingBondConflict";
    case SmilesErrorKind::DanglingBond: return "DanglingBond";
  }
  return "SmilesError";
}

std::vector<std::vector<uint32_t>> Molecule::adjacency() const {
  std::vector<std::vector<uint32_t>> adj(atoms.size());
  for (const Bond& b : bonds) {
    adj[b.a].push_back(b.b);
    adj[b.b].push_back(b.a);
  }
  return adj;
}

Molecule parse_smiles(std::string_view text) {
  return Parser(text).run();
}

int element_number(std::string_view symbol) {
  auto it = element_table().find(symbol);
  return it == element_table().end() ? 0 : it->second;
}

int implicit_hydrogens(const Molecule& mol, size_t atom_index) {
  const Atom& atom = mol.atoms.at(atom_index);
  if (atom.explicit_h) return *atom.explicit_h;

  static const std::unordered_map<int, int> kDefaultValence = {
      {5, 3}, {6, 4}, {7, 3}, {8, 2}, {15, 3},
      {16, 2}, {9, 1}, {17, 1}, {35, 1}, {53, 1}};
  auto it = kDefaultValence.find(atom.element);
  if (it == kDefaultValence.end()) return 0;

  double valence = it->second;
  const int charge = atom.formal_charge;
  if (charge > 0 && (atom.element == 7 || atom.element == 8 ||
                     atom.element == 15 || atom.element == 16)) {
    valence += charge;
  } else {
    valence -= std::abs(charge);
  }

  double order_sum = 0.0;
  for (const Bond& b : mol.bonds) {
    if (b.a != atom_index && b.b != atom_index) continue;
    switch (b.order) {
      case BondOrder::Single: order_sum += 1.0; break;
      case BondOrder::Double: order_sum += 2.0; break;
      case BondOrder::Triple: order_sum += 3.0; break;
      case BondOrder::Aromatic: order_sum += 1.5; break;
    }
  }
  const int h = static_cast<int>(std::floor(valence - order_sum));
  return h > 0 ? h : 0;
}

}  // namespace aroma
