#pragma once

#include <array>
#include <string_view>

namespace dat::glyphs {

// 5x7 bitmap glyphs, 35 characters per glyph, row-major; '#' is ink.
inline constexpr std::array<std::string_view, 10> kDigits = {
    ".###.#...##..###.#.###..##...#.###.",  // 0
    "..#...##....#....#....#....#...###.",  // 1
    ".###.#...#....#...#...#...#...#####",  // 2
    "#####...#...#.....#.....##...#.###.",  // 3
    "...#...##..#.#.#..#.#####...#....#.",  // 4
    "######....####.....#....##...#.###.",  // 5
    "..##..#...#....####.#...##...#.###.",  // 6
    "#####....#...#...#...#....#....#...",  // 7
    ".###.#...##...#.###.#...##...#.###.",  // 8
    ".###.#...##...#.####....#...#..##..",  // 9
};

// Letters that do not resemble digits (no B, D, G, I, J, O, Q, S, Z).
inline constexpr std::array<std::string_view, 17> kLetters = {
    ".###.#...##...#######...##...##...#",  // A
    ".###.#...##....#....#....#...#.###.",  // C
    "######....#....####.#....#....#####",  // E
    "######....#....####.#....#....#....",  // F
    "#...##...##...#######...##...##...#",  // H
    "#...##..#.#.#..##...#.#..#..#.#...#",  // K
    "#....#....#....#....#....#....#####",  // L
    "#...###.###.#.##.#.##...##...##...#",  // M
    "#...##...###..##.#.##..###...##...#",  // N
    "####.#...##...#####.#....#....#....",  // P
    "####.#...##...#####.#.#..#..#.#...#",  // R
    "#####..#....#....#....#....#....#..",  // T
    "#...##...##...##...##...##...#.###.",  // U
    "#...##...##...##...##...#.#.#...#..",  // V
    "#...##...##...##.#.##.#.##.#.#.#.#.",  // W
    "#...##...#.#.#...#...#.#.#...##...#",  // X
    "#...##...#.#.#...#....#....#....#..",  // Y
};

}  // namespace dat::glyphs
