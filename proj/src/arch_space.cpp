// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/arch_space.hpp"

namespace hwnas {

namespace {

constexpr std::array<std::string_view, kNumOps> kOpNames = {
    "none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3"};

// Number of edges entering node 1, 2, 3.
constexpr std::array<int, 3> kNodeFanIn = {1, 2, 3};

}  // namespace

OpKind op_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumOps)) {
    throw std::out_of_range("op code out of range: " + std::to_string(code));
  }
  return static_cast<OpKind>(code);
}

std::string_view op_name(OpKind op) {
  return kOpNames.at(static_cast<std::size_t>(op_code(op)));
}

OpKind op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumOps; ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  throw UnknownOpError(std::string(name));
}

ArchParseError::ArchParseError(const std::string& what, std::size_t position)
    : std::runtime_error("arch string parse error at position " +
                         std::to_string(position) + ": " + what),
      position_(position) {}

UnknownOpError::UnknownOpError(std::string token)
    : std::runtime_error("unknown operation '" + token + "'"),
      token_(std::move(token)) {}

Cell Cell::from_index(std::size_t index) {
  if (index >= kSpaceSize) {
    throw std::out_of_range("cell index out of range: " +
                            std::to_string(index));
  }
  Cell c;
  for (std::size_t i = kNumSlots; i-- > 0;) {
    c.slots_[i] = static_cast<OpKind>(index % kNumOps);
    index /= kNumOps;
  }
  return c;
}

std::size_t Cell::index() const {
  std::size_t index = 0;
  for (OpKind op : slots_) {
    index = index * kNumOps + static_cast<std::size_t>(op_code(op));
  }
  return index;
}

std::size_t Cell::count(OpKind op) const {
  std::size_t n = 0;
  for (OpKind s : slots_) n += (s == op);
  return n;
}

std::array<int, kNumOps> Cell::histogram() const {
  std::array<int, kNumOps> h{};
  for (OpKind s : slots_) ++h[static_cast<std::size_t>(op_code(s))];
  return h;
}

EditAction EditAction::from_flat_id(std::size_t id) {
  if (id >= kNumActions) {
    throw std::out_of_range("action id out of range: " + std::to_string(id));
  }
  return EditAction{id / kNumOps, static_cast<OpKind>(id % kNumOps)};
}

Cell apply_edit(const Cell& cell, EditAction action) {
  auto slots = cell.slots();
  slots.at(action.slot) = action.new_op;
  return Cell(slots);
}

std::size_t hamming_distance(const Cell& a, const Cell& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < kNumSlots; ++i) d += (a[i] != b[i]);
  return d;
}

std::string encode_arch_string(const Cell& cell) {
  std::string out;
  out.reserve(96);
  std::size_t slot = 0;
  for (std::size_t node = 0; node < kNodeFanIn.size(); ++node) {
    if (node > 0) out += '+';
    out += '|';
    for (int src = 0; src < kNodeFanIn[node]; ++src) {
      out += op_name(cell[slot++]);
      out += '~';
      out += static_cast<char>('0' + src);
      out += '|';
    }
  }
  return out;
}

Cell decode_arch_string(std::string_view s) {
  std::array<OpKind, kNumSlots> slots{};
  std::size_t pos = 0;
  std::size_t slot = 0;

  auto expect = [&](char c) {
    if (pos >= s.size() || s[pos] != c) {
      throw ArchParseError(std::string("expected '") + c + "'", pos);
    }
    ++pos;
  };

  for (std::size_t node = 0; node < kNodeFanIn.size(); ++node) {
    if (node > 0) expect('+');
    expect('|');
    for (int src = 0; src < kNodeFanIn[node]; ++src) {
      const std::size_t start = pos;
      const std::size_t tilde = s.find('~', pos);
      const std::size_t bar = s.find('|', pos);
      if (tilde == std::string_view::npos ||
          (bar != std::string_view::npos && bar < tilde)) {
        throw ArchParseError("expected 'op~index'", start);
      }
      slots[slot++] = op_from_name(s.substr(start, tilde - start));
      pos = tilde + 1;
      if (pos >= s.size() || s[pos] != static_cast<char>('0' + src)) {
        throw ArchParseError(
            "expected input index " + std::to_string(src), pos);
      }
      ++pos;
      expect('|');
    }
  }
  if (pos != s.size()) throw ArchParseError("trailing characters", pos);
  return Cell(slots);
}

std::vector<Cell> enumerate_space() {
  std::vector<Cell> cells;
  cells.reserve(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    cells.push_back(Cell::from_index(i));
  }
  return cells;
}

}  // namespace hwnas
