#pragma once
// Executable-section extraction from ELF and PE images, plus a raw-bytes
// fallback. Only the executable sections feed the byte corpus; headers,
// relocation tables and debug info never do. Parsers are deliberately
// strict: a truncated or inconsistent header is a MalformedHeader error,
// never a silent fallback to raw mode.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/util.hpp"

namespace xda {

enum class BinaryFormat { elf, pe, raw };

inline const char* to_string(BinaryFormat f) {
    switch (f) {
        case BinaryFormat::elf: return "elf";
        case BinaryFormat::pe: return "pe";
        case BinaryFormat::raw: return "raw";
    }
    return "?";
}

struct Section {
    std::string name;
    uint64_t file_offset = 0; // where the bytes came from in the image
    uint64_t vaddr = 0;
    std::vector<uint8_t> bytes;
};

struct ExecutableImage {
    std::string id; // caller-chosen identifier, usually the file stem
    BinaryFormat format = BinaryFormat::raw;
    std::vector<Section> sections; // executable sections only, file order
};

namespace detail {

struct ByteReader {
    const uint8_t* data;
    size_t size;

    void require(uint64_t off, uint64_t n, const char* what) const {
        if (off > size || n > size - off)
            throw MalformedHeader(std::string(what) + " extends past end of file (offset " +
                                  std::to_string(off) + ", length " + std::to_string(n) +
                                  ", file size " + std::to_string(size) + ")");
    }
    uint8_t u8(uint64_t off, const char* what) const {
        require(off, 1, what);
        return data[off];
    }
    uint16_t u16(uint64_t off, const char* what) const {
        require(off, 2, what);
        return static_cast<uint16_t>(data[off] | data[off + 1] << 8);
    }
    uint32_t u32(uint64_t off, const char* what) const {
        require(off, 4, what);
        return static_cast<uint32_t>(data[off]) | static_cast<uint32_t>(data[off + 1]) << 8 |
               static_cast<uint32_t>(data[off + 2]) << 16 | static_cast<uint32_t>(data[off + 3]) << 24;
    }
    uint64_t u64(uint64_t off, const char* what) const {
        return static_cast<uint64_t>(u32(off, what)) | static_cast<uint64_t>(u32(off + 4, what)) << 32;
    }
    std::string cstr(uint64_t off, uint64_t limit, const char* what) const {
        require(off, 0, what);
        std::string out;
        for (uint64_t i = off; i < size && i < off + limit && data[i]; ++i) out += static_cast<char>(data[i]);
        return out;
    }
};

} // namespace detail

inline ExecutableImage parse_elf(const std::vector<uint8_t>& file, const std::string& id) {
    detail::ByteReader r{file.data(), file.size()};
    r.require(0, 16, "ELF identification");
    if (!(file[0] == 0x7f && file[1] == 'E' && file[2] == 'L' && file[3] == 'F'))
        throw MalformedHeader("missing ELF magic");
    const uint8_t ei_class = file[4];
    const uint8_t ei_data = file[5];
    if (ei_data != 1) throw MalformedHeader("only little-endian ELF is supported");
    if (ei_class != 1 && ei_class != 2) throw MalformedHeader("invalid EI_CLASS " + std::to_string(ei_class));
    const bool is64 = ei_class == 2;

    ExecutableImage img;
    img.id = id;
    img.format = BinaryFormat::elf;

    // Header field offsets differ between ELF32 and ELF64.
    const uint64_t e_shoff = is64 ? r.u64(0x28, "e_shoff") : r.u32(0x20, "e_shoff");
    const uint16_t e_shentsize = r.u16(is64 ? 0x3a : 0x2e, "e_shentsize");
    const uint16_t e_shnum = r.u16(is64 ? 0x3c : 0x30, "e_shnum");
    const uint16_t e_shstrndx = r.u16(is64 ? 0x3e : 0x32, "e_shstrndx");

    constexpr uint64_t SHF_EXECINSTR = 0x4;
    constexpr uint32_t SHT_NOBITS = 8;

    if (e_shoff != 0 && e_shnum != 0) {
        const uint64_t want = is64 ? 64 : 40;
        if (e_shentsize < want)
            throw MalformedHeader("e_shentsize " + std::to_string(e_shentsize) + " too small");
        r.require(e_shoff, static_cast<uint64_t>(e_shnum) * e_shentsize, "section header table");

        // String table for section names; optional but validated when present.
        uint64_t str_off = 0, str_size = 0;
        if (e_shstrndx < e_shnum) {
            uint64_t sh = e_shoff + static_cast<uint64_t>(e_shstrndx) * e_shentsize;
            str_off = is64 ? r.u64(sh + 0x18, "shstrtab offset") : r.u32(sh + 0x10, "shstrtab offset");
            str_size = is64 ? r.u64(sh + 0x20, "shstrtab size") : r.u32(sh + 0x14, "shstrtab size");
            r.require(str_off, str_size, "shstrtab");
        }

        for (uint16_t i = 0; i < e_shnum; ++i) {
            const uint64_t sh = e_shoff + static_cast<uint64_t>(i) * e_shentsize;
            const uint32_t sh_name = r.u32(sh + 0x0, "sh_name");
            const uint32_t sh_type = r.u32(sh + 0x4, "sh_type");
            const uint64_t sh_flags = is64 ? r.u64(sh + 0x8, "sh_flags") : r.u32(sh + 0x8, "sh_flags");
            const uint64_t sh_addr = is64 ? r.u64(sh + 0x10, "sh_addr") : r.u32(sh + 0xc, "sh_addr");
            const uint64_t sh_offset = is64 ? r.u64(sh + 0x18, "sh_offset") : r.u32(sh + 0x10, "sh_offset");
            const uint64_t sh_size = is64 ? r.u64(sh + 0x20, "sh_size") : r.u32(sh + 0x14, "sh_size");
            if (!(sh_flags & SHF_EXECINSTR) || sh_type == SHT_NOBITS || sh_size == 0) continue;
            r.require(sh_offset, sh_size, "executable section body");
            Section s;
            s.name = str_size ? r.cstr(str_off + sh_name, str_size - std::min<uint64_t>(sh_name, str_size), "section name")
                              : "sec" + std::to_string(i);
            if (s.name.empty()) s.name = "sec" + std::to_string(i);
            s.file_offset = sh_offset;
            s.vaddr = sh_addr;
            s.bytes.assign(file.begin() + static_cast<ptrdiff_t>(sh_offset),
                           file.begin() + static_cast<ptrdiff_t>(sh_offset + sh_size));
            img.sections.push_back(std::move(s));
        }
        if (!img.sections.empty()) return img;
    }

    // No usable section table: fall back to executable PT_LOAD segments.
    const uint64_t e_phoff = is64 ? r.u64(0x20, "e_phoff") : r.u32(0x1c, "e_phoff");
    const uint16_t e_phentsize = r.u16(is64 ? 0x36 : 0x2a, "e_phentsize");
    const uint16_t e_phnum = r.u16(is64 ? 0x38 : 0x2c, "e_phnum");
    constexpr uint32_t PT_LOAD = 1;
    constexpr uint32_t PF_X = 1;
    if (e_phoff == 0 || e_phnum == 0)
        throw MalformedHeader("no section headers and no program headers");
    r.require(e_phoff, static_cast<uint64_t>(e_phnum) * e_phentsize, "program header table");
    for (uint16_t i = 0; i < e_phnum; ++i) {
        const uint64_t ph = e_phoff + static_cast<uint64_t>(i) * e_phentsize;
        const uint32_t p_type = r.u32(ph + 0x0, "p_type");
        const uint32_t p_flags = is64 ? r.u32(ph + 0x4, "p_flags") : r.u32(ph + 0x18, "p_flags");
        const uint64_t p_offset = is64 ? r.u64(ph + 0x8, "p_offset") : r.u32(ph + 0x4, "p_offset");
        const uint64_t p_vaddr = is64 ? r.u64(ph + 0x10, "p_vaddr") : r.u32(ph + 0x8, "p_vaddr");
        const uint64_t p_filesz = is64 ? r.u64(ph + 0x20, "p_filesz") : r.u32(ph + 0x10, "p_filesz");
        if (p_type != PT_LOAD || !(p_flags & PF_X) || p_filesz == 0) continue;
        r.require(p_offset, p_filesz, "executable segment body");
        Section s;
        s.name = "load" + std::to_string(img.sections.size());
        s.file_offset = p_offset;
        s.vaddr = p_vaddr;
        s.bytes.assign(file.begin() + static_cast<ptrdiff_t>(p_offset),
                       file.begin() + static_cast<ptrdiff_t>(p_offset + p_filesz));
        img.sections.push_back(std::move(s));
    }
    if (img.sections.empty()) throw MalformedHeader("ELF image has no executable sections or segments");
    return img;
}

inline ExecutableImage parse_pe(const std::vector<uint8_t>& file, const std::string& id) {
    detail::ByteReader r{file.data(), file.size()};
    if (r.u16(0, "DOS magic") != 0x5a4d) throw MalformedHeader("missing MZ magic");
    const uint32_t e_lfanew = r.u32(0x3c, "e_lfanew");
    if (r.u32(e_lfanew, "PE signature") != 0x00004550) throw MalformedHeader("missing PE signature");

    const uint64_t coff = e_lfanew + 4;
    const uint16_t n_sections = r.u16(coff + 2, "NumberOfSections");
    const uint16_t opt_size = r.u16(coff + 16, "SizeOfOptionalHeader");
    if (n_sections == 0) throw MalformedHeader("PE image declares zero sections");

    ExecutableImage img;
    img.id = id;
    img.format = BinaryFormat::pe;

    constexpr uint32_t IMAGE_SCN_MEM_EXECUTE = 0x20000000;
    const uint64_t table = coff + 20 + opt_size;
    r.require(table, static_cast<uint64_t>(n_sections) * 40, "PE section table");
    for (uint16_t i = 0; i < n_sections; ++i) {
        const uint64_t sh = table + static_cast<uint64_t>(i) * 40;
        const uint32_t virtual_size = r.u32(sh + 8, "VirtualSize");
        const uint32_t virtual_addr = r.u32(sh + 12, "VirtualAddress");
        const uint32_t raw_size = r.u32(sh + 16, "SizeOfRawData");
        const uint32_t raw_ptr = r.u32(sh + 20, "PointerToRawData");
        const uint32_t characteristics = r.u32(sh + 36, "Characteristics");
        if (!(characteristics & IMAGE_SCN_MEM_EXECUTE) || raw_size == 0) continue;
        // SizeOfRawData is padded to the file alignment; VirtualSize, when
        // smaller, is the real extent of the section's content.
        uint64_t len = raw_size;
        if (virtual_size != 0 && virtual_size < len) len = virtual_size;
        r.require(raw_ptr, len, "executable section body");
        Section s;
        char namebuf[9] = {};
        r.require(sh, 8, "section name");
        std::memcpy(namebuf, file.data() + sh, 8);
        s.name = namebuf;
        if (s.name.empty()) s.name = "sec" + std::to_string(i);
        s.file_offset = raw_ptr;
        s.vaddr = virtual_addr;
        s.bytes.assign(file.begin() + raw_ptr, file.begin() + raw_ptr + static_cast<ptrdiff_t>(len));
        img.sections.push_back(std::move(s));
    }
    if (img.sections.empty()) throw MalformedHeader("PE image has no executable sections");
    return img;
}

inline ExecutableImage load_raw(const std::vector<uint8_t>& file, const std::string& id) {
    if (file.empty()) throw MalformedHeader("raw input is empty");
    ExecutableImage img;
    img.id = id;
    img.format = BinaryFormat::raw;
    Section s;
    s.name = ".raw";
    s.bytes = file;
    img.sections.push_back(std::move(s));
    return img;
}

// Dispatch on magic bytes. Unknown magic is treated as raw only when the
// caller allows it; format-specific entry points above stay strict.
inline ExecutableImage load_image(const std::vector<uint8_t>& file, const std::string& id,
                                  bool allow_raw = true) {
    if (file.size() >= 4 && file[0] == 0x7f && file[1] == 'E' && file[2] == 'L' && file[3] == 'F')
        return parse_elf(file, id);
    if (file.size() >= 2 && file[0] == 'M' && file[1] == 'Z') return parse_pe(file, id);
    if (!allow_raw) throw MalformedHeader("unrecognized image magic for " + id);
    return load_raw(file, id);
}

inline ExecutableImage load_image_file(const std::filesystem::path& path, bool allow_raw = true) {
    return load_image(read_file_bytes(path), path.stem().string(), allow_raw);
}

} // namespace xda
