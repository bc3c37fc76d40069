#include "multiverse/ros/runtime.hpp"

#include "multiverse/errors.hpp"

namespace multiverse::ros {

toolchain::FatBinary init_runtime(
    RosProcess& process, hrt::AeroKernel& hrt,
    std::span<const std::uint8_t> fat_binary,
    const std::map<std::string, hrt::FunctionBehavior>& behaviors) {
  auto& channel = hrt.channel();
  auto& log = channel.log();
  const ThreadId main = process.main();

  log.charge(channel::EventKind::Init, main, channel::Detail{{"step", "signals"}}, 0);

  process.set_exit_hook([&hrt](ThreadId caller) { hrt.shutdown(caller); });
  log.charge(channel::EventKind::Init, main, channel::Detail{{"step", "exit_hook"}}, 0);

  toolchain::FatBinary fb;
  try {
    fb = toolchain::parse_fat_binary(fat_binary);
  } catch (const FormatError& e) {
    throw InstallError(std::string("corrupt embedded AeroKernel image: ") + e.what());
  }
  hrt.set_functions(hrt::link_functions(fb.image, behaviors));
  log.charge(channel::EventKind::Init, main,
             channel::Detail{{"step", "linkage"},
                             {"symbols", std::to_string(fb.image.symbols.size())}},
             0);

  hrt.install_image(fb.image, main);
  hrt.boot_all(main);
  channel.hypercall(main, channel::Side::Ros,
                    channel::Hypercall::merge(process.space().cr3()));
  process.attach_hrt(&hrt);
  return fb;
}

}  // namespace multiverse::ros
