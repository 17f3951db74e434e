import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: "./test/globalSetup.ts",
    testTimeout: 60_000,
    hookTimeout: 60_000,
    // tests share one live gateway fixture; keep files sequential
    fileParallelism: false,
  },
});
