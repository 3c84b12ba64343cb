// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_ARCH_SPACE_HPP_
#define HWNAS_ARCH_SPACE_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hwnas {

// Operation codes are stable: they index one-hot encodings and file formats.
enum class OpKind : std::uint8_t {
  kNone = 0,
  kSkipConnect = 1,
  kConv1x1 = 2,
  kConv3x3 = 3,
  kAvgPool3x3 = 4,
};

inline constexpr std::size_t kNumOps = 5;
inline constexpr std::size_t kNumSlots = 6;
inline constexpr std::size_t kNumActions = kNumSlots * kNumOps;
inline constexpr std::size_t kSpaceSize = 15625;  // kNumOps ^ kNumSlots

inline constexpr std::array<OpKind, kNumOps> kAllOps = {
    OpKind::kNone, OpKind::kSkipConnect, OpKind::kConv1x1, OpKind::kConv3x3,
    OpKind::kAvgPool3x3};

constexpr int op_code(OpKind op) { return static_cast<int>(op); }
OpKind op_from_code(int code);

// Canonical benchmark names: none, skip_connect, nor_conv_1x1, ...
std::string_view op_name(OpKind op);
// Throws UnknownOpError for anything outside the five canonical names.
OpKind op_from_name(std::string_view name);

class ArchParseError : public std::runtime_error {
 public:
  ArchParseError(const std::string& what, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UnknownOpError : public std::runtime_error {
 public:
  explicit UnknownOpError(std::string token);
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

// Slot i is the DAG edge (1<-0), (2<-0), (2<-1), (3<-0), (3<-1), (3<-2).
struct SlotEdge {
  int to;
  int from;
};
inline constexpr std::array<SlotEdge, kNumSlots> kSlotEdges = {
    {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}}};

class Cell {
 public:
  Cell() { slots_.fill(OpKind::kNone); }
  explicit Cell(const std::array<OpKind, kNumSlots>& slots) : slots_(slots) {}

  static Cell uniform(OpKind op) {
    Cell c;
    c.slots_.fill(op);
    return c;
  }

  // Mixed-radix index with slot 0 as the most significant digit.
  static Cell from_index(std::size_t index);
  std::size_t index() const;

  OpKind operator[](std::size_t slot) const { return slots_.at(slot); }
  const std::array<OpKind, kNumSlots>& slots() const { return slots_; }

  std::size_t count(OpKind op) const;
  std::array<int, kNumOps> histogram() const;

  friend bool operator==(const Cell&, const Cell&) = default;

 private:
  std::array<OpKind, kNumSlots> slots_;
};

struct EditAction {
  std::size_t slot = 0;
  OpKind new_op = OpKind::kNone;

  // slot * kNumOps + op_code, in [0, kNumActions).
  std::size_t flat_id() const {
    return slot * kNumOps + static_cast<std::size_t>(op_code(new_op));
  }
  static EditAction from_flat_id(std::size_t id);

  friend bool operator==(const EditAction&, const EditAction&) = default;
};

// Replacing an op with itself is the no-op action.
Cell apply_edit(const Cell& cell, EditAction action);

std::size_t hamming_distance(const Cell& a, const Cell& b);

std::string encode_arch_string(const Cell& cell);
Cell decode_arch_string(std::string_view s);

// All kSpaceSize cells, lexicographic in slot order (index order).
std::vector<Cell> enumerate_space();

}  // namespace hwnas

#endif  // HWNAS_ARCH_SPACE_HPP_
