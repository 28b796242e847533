import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 20_000,
    hookTimeout: 30_000,
    // the integration test spawns one simulator+service pair; keep files serial
    fileParallelism: false,
  },
});
